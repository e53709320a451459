//! Manual conditioning at inference time: pick an emotion, a style
//! direction and an intensity, get the embedding the acoustic model consumes.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{encode_emotion, EmotionEmbedding, EncoderError, EncoderWeights};
use crate::sphere::{Octant, SphereError};

/// Minimum norm of a manual style vector.
pub const MIN_STYLE_NORM: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("unknown intensity preset {0:?} (expected weak, medium or strong)")]
    UnknownPreset(String),
    #[error("style vector {0:?} has (near) zero length")]
    ZeroStyleVector([f64; 3]),
    #[error("intensity {0} outside [0, 1]")]
    InvalidIntensity(f64),
    #[error("invalid control spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Sphere(#[from] SphereError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

impl ControlError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::UnknownPreset(_) => "UnknownPreset",
            Self::ZeroStyleVector(_) => "ZeroStyleVector",
            Self::InvalidIntensity(_) => "InvalidIntensity",
            Self::InvalidSpec(_) => "InvalidSpec",
            Self::Sphere(e) => e.name(),
            Self::Encoder(e) => e.name(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ControlError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Weak,
    Medium,
    Strong,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Weak, Preset::Medium, Preset::Strong];

    pub fn value(self) -> f64 {
        match self {
            Self::Weak => 0.1,
            Self::Medium => 0.5,
            Self::Strong => 0.9,
        }
    }
}

pub fn intensity_preset(name: &str) -> Result<f64> {
    match name {
        "weak" => Ok(Preset::Weak.value()),
        "medium" => Ok(Preset::Medium.value()),
        "strong" => Ok(Preset::Strong.value()),
        other => Err(ControlError::UnknownPreset(other.to_string())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "A")]
    Arousal,
    #[serde(rename = "V")]
    Valence,
    #[serde(rename = "D")]
    Dominance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-", alias = "\u{2212}")]
    Minus,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Arousal => "A",
            Self::Valence => "V",
            Self::Dominance => "D",
        })
    }
}

/// Signed basis vector in (arousal, valence, dominance) order.
pub fn axis_style(axis: Axis, sign: Sign) -> [f64; 3] {
    let s = match sign {
        Sign::Plus => 1.0,
        Sign::Minus => -1.0,
    };
    let mut v = [0.0; 3];
    v[axis as usize] = s;
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StyleSpec {
    Octant { octant: i64 },
    Vector { vector: [f64; 3] },
    Axis { axis: Axis, sign: Sign },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IntensitySpec {
    Value(f64),
    Preset(Preset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub emotion: String,
    pub style: StyleSpec,
    pub intensity: IntensitySpec,
}

impl ControlSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| ControlError::InvalidSpec(e.to_string()))
    }
}

/// The embedding plus the numeric inputs it was computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub emotion: String,
    pub style: [f64; 3],
    pub intensity: f64,
    pub embedding: EmotionEmbedding,
}

pub fn resolve_style(style: &StyleSpec) -> Result<[f64; 3]> {
    match *style {
        StyleSpec::Octant { octant } => Ok(Octant::new(octant)?.style_vector()),
        StyleSpec::Axis { axis, sign } => Ok(axis_style(axis, sign)),
        StyleSpec::Vector { vector } => {
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(ControlError::InvalidSpec(format!("style vector {vector:?} is not finite")));
            }
            let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < MIN_STYLE_NORM {
                return Err(ControlError::ZeroStyleVector(vector));
            }
            Ok(vector.map(|x| x / norm))
        }
    }
}

pub fn resolve_intensity(intensity: &IntensitySpec) -> Result<f64> {
    match *intensity {
        IntensitySpec::Preset(p) => Ok(p.value()),
        IntensitySpec::Value(v) if (0.0..=1.0).contains(&v) => Ok(v),
        IntensitySpec::Value(v) => Err(ControlError::InvalidIntensity(v)),
    }
}

pub fn build_control(spec: &ControlSpec, w: &EncoderWeights) -> Result<Control> {
    let style = resolve_style(&spec.style)?;
    let intensity = resolve_intensity(&spec.intensity)?;
    let embedding = encode_emotion(style, intensity, &spec.emotion, w)?;
    Ok(Control { emotion: spec.emotion.clone(), style, intensity, embedding })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::DEFAULT_EMOTIONS;

    fn weights() -> EncoderWeights {
        EncoderWeights::seeded(42, 16, &DEFAULT_EMOTIONS)
    }

    #[test]
    fn presets() {
        assert_eq!(intensity_preset("weak").unwrap(), 0.1);
        assert_eq!(intensity_preset("medium").unwrap(), 0.5);
        assert_eq!(intensity_preset("strong").unwrap(), 0.9);
        assert_eq!(intensity_preset("extreme"), Err(ControlError::UnknownPreset("extreme".into())));
    }

    #[test]
    fn axis_vectors() {
        assert_eq!(axis_style(Axis::Arousal, Sign::Plus), [1.0, 0.0, 0.0]);
        assert_eq!(axis_style(Axis::Dominance, Sign::Minus), [0.0, 0.0, -1.0]);
        let all: Vec<_> = [Axis::Arousal, Axis::Valence, Axis::Dominance]
            .into_iter()
            .flat_map(|a| [Sign::Plus, Sign::Minus].map(|s| axis_style(a, s)))
            .collect();
        for (i, v) in all.iter().enumerate() {
            assert_eq!(v.iter().map(|x| x * x).sum::<f64>(), 1.0);
            assert!(all[i + 1..].iter().all(|w| w != v));
        }
    }

    #[test]
    fn octant_preset_control_matches_direct_call() {
        let w = weights();
        let spec = ControlSpec::from_json(r#"{"emotion":"angry","style":{"octant":7},"intensity":"strong"}"#).unwrap();
        let c = build_control(&spec, &w).unwrap();
        let s = 1.0 / 3f64.sqrt();
        assert_eq!(c.style, [s, s, s]);
        assert_eq!(c.intensity, 0.9);
        assert_eq!(c.embedding, encode_emotion([s, s, s], 0.9, "angry", &w).unwrap());
    }

    #[test]
    fn manual_vectors_are_normalized() {
        let w = weights();
        let spec = |v: [f64; 3]| ControlSpec {
            emotion: "sad".into(),
            style: StyleSpec::Vector { vector: v },
            intensity: IntensitySpec::Value(0.3),
        };
        let c = build_control(&spec([2.0, 0.0, 0.0]), &w).unwrap();
        assert_eq!(c.style, [1.0, 0.0, 0.0]);
        let a = build_control(&spec([0.3, -0.4, 1.2]), &w).unwrap();
        let b = build_control(&spec([3.0, -4.0, 12.0]), &w).unwrap();
        for (x, y) in a.embedding.0.iter().zip(&b.embedding.0) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(
            build_control(&spec([0.0, 1e-12, 0.0]), &w).unwrap_err(),
            ControlError::ZeroStyleVector([0.0, 1e-12, 0.0])
        );
    }

    #[test]
    fn spec_parsing_variants_and_errors() {
        let spec = ControlSpec::from_json(r#"{"emotion":"happy","style":{"axis":"V","sign":"-"},"intensity":0.25}"#).unwrap();
        assert_eq!(spec.style, StyleSpec::Axis { axis: Axis::Valence, sign: Sign::Minus });
        assert_eq!(spec.intensity, IntensitySpec::Value(0.25));
        let spec = ControlSpec::from_json(r#"{"emotion":"happy","style":{"vector":[1,2,3]},"intensity":"weak"}"#).unwrap();
        assert_eq!(spec.intensity, IntensitySpec::Preset(Preset::Weak));

        assert!(ControlSpec::from_json(r#"{"emotion":"happy","style":{"octant":7},"intensity":"huge"}"#).is_err());
        let w = weights();
        let bad = |json: &str| build_control(&ControlSpec::from_json(json).unwrap(), &w).unwrap_err().name();
        assert_eq!(bad(r#"{"emotion":"happy","style":{"octant":9},"intensity":0.5}"#), "OctantOutOfRange");
        assert_eq!(bad(r#"{"emotion":"happy","style":{"octant":1},"intensity":1.5}"#), "InvalidIntensity");
        assert_eq!(bad(r#"{"emotion":"bored","style":{"octant":1},"intensity":0.5}"#), "UnknownEmotion");
    }

    #[test]
    fn intensity_sweep_moves_along_projection_column() {
        let w = weights();
        let embs: Vec<_> = Preset::ALL
            .iter()
            .map(|&p| {
                let spec = ControlSpec {
                    emotion: "surprise".into(),
                    style: StyleSpec::Octant { octant: 3 },
                    intensity: IntensitySpec::Preset(p),
                };
                (p.value(), build_control(&spec, &w).unwrap().embedding.0)
            })
            .collect();
        for (i, (ia, a)) in embs.iter().enumerate() {
            for (ib, b) in &embs[i + 1..] {
                for k in 0..a.len() {
                    assert!((a[k] - b[k] - (ia - ib) * w.intensity_proj[k]).abs() < 1e-9);
                }
            }
        }
    }
}
