//! Spherical emotion encoder forward pass.
//!
//! ```text
//! h_sty = W_sty * style + b_sty                (P)
//! h_cls = class_table[emotion]                 (P)
//! h_int = w_int * intensity + b_int            (H = 2P)
//! h_emo = LN(softplus([h_sty; h_cls])) + h_int (H)
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

pub const DEFAULT_BRANCH_WIDTH: usize = 128;
pub const LN_EPS: f64 = 1e-5;
/// Seeded initialization draws every random entry from `[-INIT_RANGE, INIT_RANGE)`.
pub const INIT_RANGE: f64 = 0.1;
/// The five emotion classes of the usual English emotional speech corpus.
pub const DEFAULT_EMOTIONS: [&str; 5] = ["neutral", "angry", "happy", "sad", "surprise"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("emotion {0:?} has no class embedding")]
    UnknownEmotion(String),
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch { what: &'static str, expected: usize, found: usize },
    #[error("length mismatch: vector {vector}, gamma {gamma}, beta {beta}")]
    LengthMismatch { vector: usize, gamma: usize, beta: usize },
    #[error("layer norm needs at least 2 elements, found {0}")]
    TooShort(usize),
    #[error("intensity {0} outside [0, 1]")]
    InvalidIntensity(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
}

impl EncoderError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::UnknownEmotion(_) => "UnknownEmotion",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::LengthMismatch { .. } => "LengthMismatch",
            Self::TooShort(_) => "TooShort",
            Self::InvalidIntensity(_) => "InvalidIntensity",
            Self::NonFinite(_) => "NonFinite",
            Self::InvalidWeights(_) => "InvalidWeights",
        }
    }
}

pub type Result<T> = std::result::Result<T, EncoderError>;

/// `log(1 + exp(x))` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_vec(v: &[f64]) -> Vec<f64> {
    v.iter().copied().map(softplus).collect()
}

/// Layer normalization with population variance.
///
/// Statistics are taken on values shifted by the first element, so a
/// constant input normalizes to exact zeros.
pub fn layer_norm(v: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Result<Vec<f64>> {
    if v.len() != gamma.len() || v.len() != beta.len() {
        return Err(EncoderError::LengthMismatch { vector: v.len(), gamma: gamma.len(), beta: beta.len() });
    }
    if v.len() < 2 {
        return Err(EncoderError::TooShort(v.len()));
    }
    let n = v.len() as f64;
    let shift = v[0];
    let shifted: Vec<f64> = v.iter().map(|x| x - shift).collect();
    let mean = shifted.iter().sum::<f64>() / n;
    let var = shifted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv_std = 1.0 / (var + eps).sqrt();
    Ok(shifted
        .iter()
        .zip(gamma.iter().zip(beta))
        .map(|(x, (g, b))| (x - mean) * inv_std * g + b)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderDims {
    /// Width of the style and class branches.
    pub p: usize,
    /// Output width, always `2 * p`.
    pub h: usize,
}

/// Encoder parameters. Matrices are row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    pub dims: EncoderDims,
    /// `P x 3`.
    pub style_proj: Vec<f64>,
    pub style_bias: Vec<f64>,
    /// `|emotions| x P`, rows indexed through `emotion_index`.
    pub class_table: Vec<f64>,
    /// `H x 1`.
    pub intensity_proj: Vec<f64>,
    pub intensity_bias: Vec<f64>,
    pub ln_gamma: Vec<f64>,
    pub ln_beta: Vec<f64>,
    pub emotion_index: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmotionEmbedding(pub Vec<f64>);

impl EncoderWeights {
    /// Reproducible weights from a seed.
    ///
    /// Draw order: style_proj, style_bias, class_table (rows in `emotions`
    /// order), intensity_proj, intensity_bias, each uniform in
    /// `[-0.1, 0.1)`. Layer-norm gain starts at 1 and shift at 0.
    pub fn seeded(seed: u64, p: usize, emotions: &[&str]) -> Self {
        let mut rng = SplitMix64::new(seed);
        let h = 2 * p;
        let mut draw = |n: usize| rng.fill_uniform(n, -INIT_RANGE, INIT_RANGE);
        let style_proj = draw(p * 3);
        let style_bias = draw(p);
        let class_table = draw(emotions.len() * p);
        let intensity_proj = draw(h);
        let intensity_bias = draw(h);
        let mut emotion_index = BTreeMap::new();
        for (row, e) in emotions.iter().enumerate() {
            emotion_index.entry(e.to_string()).or_insert(row);
        }
        Self {
            dims: EncoderDims { p, h },
            style_proj,
            style_bias,
            class_table,
            intensity_proj,
            intensity_bias,
            ln_gamma: vec![1.0; h],
            ln_beta: vec![0.0; h],
            emotion_index,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let EncoderDims { p, h } = self.dims;
        if p == 0 {
            return Err(EncoderError::InvalidWeights("branch width must be positive".into()));
        }
        let check = |what: &'static str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(EncoderError::DimensionMismatch { what, expected, found })
            }
        };
        check("dims.h (must be 2p)", 2 * p, h)?;
        check("style_proj", p * 3, self.style_proj.len())?;
        check("style_bias", p, self.style_bias.len())?;
        let rows = self.class_table.len() / p;
        check("class_table", rows * p, self.class_table.len())?;
        check("intensity_proj", h, self.intensity_proj.len())?;
        check("intensity_bias", h, self.intensity_bias.len())?;
        check("ln_gamma", h, self.ln_gamma.len())?;
        check("ln_beta", h, self.ln_beta.len())?;
        check("emotion_index", rows, self.emotion_index.len())?;
        let mut used = vec![false; rows];
        for (label, &row) in &self.emotion_index {
            if row >= rows || std::mem::replace(&mut used[row], true) {
                return Err(EncoderError::InvalidWeights(format!(
                    "emotion {label:?} maps to row {row}, rows must be a permutation of 0..{rows}"
                )));
            }
        }
        let all = [
            &self.style_proj,
            &self.style_bias,
            &self.class_table,
            &self.intensity_proj,
            &self.intensity_bias,
            &self.ln_gamma,
            &self.ln_beta,
        ];
        if all.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(EncoderError::NonFinite("encoder weights"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: Self = serde_json::from_str(text).map_err(|e| EncoderError::InvalidWeights(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("weights serialize")
    }

    pub fn class_row(&self, emotion: &str) -> Result<&[f64]> {
        let p = self.dims.p;
        let row = *self
            .emotion_index
            .get(emotion)
            .ok_or_else(|| EncoderError::UnknownEmotion(emotion.to_string()))?;
        Ok(&self.class_table[row * p..(row + 1) * p])
    }

    pub fn knows(&self, emotion: &str) -> bool {
        self.emotion_index.contains_key(emotion)
    }
}

pub fn encode_emotion(style: [f64; 3], intensity: f64, emotion: &str, w: &EncoderWeights) -> Result<EmotionEmbedding> {
    w.validate()?;
    if style.iter().any(|x| !x.is_finite()) {
        return Err(EncoderError::NonFinite("style vector"));
    }
    if !(0.0..=1.0).contains(&intensity) {
        return Err(EncoderError::InvalidIntensity(intensity));
    }
    let p = w.dims.p;
    let h_cls = w.class_row(emotion)?;

    let mut fused = Vec::with_capacity(w.dims.h);
    for i in 0..p {
        let row = &w.style_proj[i * 3..i * 3 + 3];
        fused.push(row[0] * style[0] + row[1] * style[1] + row[2] * style[2] + w.style_bias[i]);
    }
    fused.extend_from_slice(h_cls);
    let z = layer_norm(&softplus_vec(&fused), &w.ln_gamma, &w.ln_beta, LN_EPS)?;

    Ok(EmotionEmbedding(
        z.iter()
            .zip(w.intensity_proj.iter().zip(&w.intensity_bias))
            .map(|(z, (wi, bi))| z + (wi * intensity + bi))
            .collect(),
    ))
}
