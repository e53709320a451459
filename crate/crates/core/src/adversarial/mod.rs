//! Dual conditional adversarial losses at desk scale.
//!
//! Mel clips of several window lengths are judged by small Conv2D stacks,
//! one per (window, condition kind). Conditioned stacks see the clip plus a
//! speaker or emotion embedding tiled over time as a second channel; the
//! optional unconditional stack sees the clip alone. The least-squares
//! objectives are
//!
//! ```text
//! L_D = sum_c sum_t mean_b [ (1 - D_t(y_t, c))^2 + D_t(y_hat_t, c)^2 ]
//! L_G = sum_c sum_t mean_b [ (1 - D_t(y_hat_t, c))^2 ]
//! ```
//!
//! Gradients are computed by hand-written reverse mode and can be checked
//! against central finite differences with [`gradcheck`].

mod condition;
mod disc;
mod gradcheck;
mod loss;
mod mel;

pub use condition::{broadcast_condition, ConditionEmbedding, ConditionKind, SampleConditions, Tensor3};
pub use disc::{
    disc_forward, ConvLayer, ConvStack, DiscriminatorConfig, DiscriminatorGrads, DiscriminatorWeights,
    StackConfig, StackGrads,
};
pub use gradcheck::{
    gradcheck, relative_error, tiny_scenario, GradCheckReport, Scenario, DEFAULT_STEP, DEFAULT_THRESHOLD, REL_ERR_FLOOR,
};
pub use loss::{
    discriminator_scores, gan_losses, loss_gradients, ClipStarts, GanBatch, GanLosses, GradTarget, Gradients,
    InputGrads, LossConfig, LossTerm, ScoreEntry, Scores, TermRole,
};
pub use mel::{random_clip, Mel, MelClip, MELF_MAGIC};

use thiserror::Error;

/// Default clip window lengths in frames.
pub const DEFAULT_WINDOWS: [usize; 3] = [32, 64, 96];
/// Default width of the speaker and emotion condition projections.
pub const DEFAULT_CONDITION_DIM: usize = 128;
/// Mel bins of full-size fixtures.
pub const DEFAULT_MEL_BINS: usize = 80;
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdversarialError {
    #[error("window {window} is longer than the mel ({frames} frames)")]
    WindowTooLong { window: usize, frames: usize },
    #[error("clip start {start} + window {window} exceeds {frames} frames")]
    StartOutOfRange { start: usize, window: usize, frames: usize },
    #[error("shape mismatch in {what}: expected {expected:?}, found {actual:?}")]
    ShapeMismatch { what: String, expected: Vec<usize>, actual: Vec<usize> },
    #[error("batch mismatch: {0}")]
    BatchMismatch(String),
    #[error("no discriminator stack for window {window}, kind {kind}")]
    MissingStack { window: usize, kind: ConditionKind },
    #[error("malformed mel file: {0}")]
    MalformedMel(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid discriminator weights: {0}")]
    InvalidWeights(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl AdversarialError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::WindowTooLong { .. } => "WindowTooLong",
            Self::StartOutOfRange { .. } => "StartOutOfRange",
            Self::ShapeMismatch { .. } => "ShapeMismatch",
            Self::BatchMismatch(_) => "BatchMismatch",
            Self::MissingStack { .. } => "MissingStack",
            Self::MalformedMel(_) => "MalformedMel",
            Self::NonFinite(_) => "NonFinite",
            Self::InvalidWeights(_) => "InvalidWeights",
            Self::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

pub type Result<T> = std::result::Result<T, AdversarialError>;
