use std::fmt;

use serde::{Deserialize, Serialize};

use super::{AdversarialError, MelClip, Result};

/// A dense `channels x height x width` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self { channels, height, width, data: vec![0.0; channels * height * width] }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    Speaker,
    Emotion,
    #[serde(rename = "none")]
    Unconditional,
}

impl ConditionKind {
    /// Kinds that take part in the loss, in summation order.
    pub fn enabled(uncond: bool) -> Vec<ConditionKind> {
        let mut kinds = vec![Self::Speaker, Self::Emotion];
        if uncond {
            kinds.push(Self::Unconditional);
        }
        kinds
    }

    pub fn input_channels(self) -> usize {
        match self {
            Self::Unconditional => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Speaker => "speaker",
            Self::Emotion => "emotion",
            Self::Unconditional => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEmbedding {
    pub kind: ConditionKind,
    pub values: Vec<f64>,
}

impl ConditionEmbedding {
    pub fn none() -> Self {
        Self { kind: ConditionKind::Unconditional, values: Vec::new() }
    }
}

/// Speaker and emotion condition vectors of one training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConditions {
    pub speaker: Vec<f64>,
    pub emotion: Vec<f64>,
}

impl SampleConditions {
    pub fn for_kind(&self, kind: ConditionKind) -> ConditionEmbedding {
        let values = match kind {
            ConditionKind::Speaker => self.speaker.clone(),
            ConditionKind::Emotion => self.emotion.clone(),
            ConditionKind::Unconditional => Vec::new(),
        };
        ConditionEmbedding { kind, values }
    }
}

/// Stacks the clip and the time-tiled condition as two channels.
///
/// Both channels are zero-padded along the feature axis to
/// `max(F, C)` rows. Without a condition the clip is returned as a single
/// `1 x F x t` channel.
pub fn broadcast_condition(cond: &ConditionEmbedding, clip: &MelClip) -> Result<Tensor3> {
    let (f, t) = (clip.bins, clip.window);
    if cond.kind == ConditionKind::Unconditional {
        if !cond.values.is_empty() {
            return Err(AdversarialError::ShapeMismatch {
                what: "unconditional embedding".into(),
                expected: vec![0],
                actual: vec![cond.values.len()],
            });
        }
        return Ok(Tensor3 { channels: 1, height: f, width: t, data: clip.data.clone() });
    }
    if cond.values.is_empty() {
        return Err(AdversarialError::ShapeMismatch {
            what: format!("{} embedding", cond.kind),
            expected: vec![1],
            actual: vec![0],
        });
    }
    let c = cond.values.len();
    let height = f.max(c);
    let mut x = Tensor3::zeros(2, height, t);
    for row in 0..f {
        let dst = x.idx(0, row, 0);
        x.data[dst..dst + t].copy_from_slice(&clip.data[row * t..(row + 1) * t]);
    }
    for (row, &v) in cond.values.iter().enumerate() {
        let dst = x.idx(1, row, 0);
        x.data[dst..dst + t].fill(v);
    }
    Ok(x)
}
