//! Emotion conditioning for expressive speech synthesis.
//!
//! Arousal/valence/dominance pseudo-labels are mapped into a spherical
//! emotion space ([`sphere`]), fused with an emotion class into a single
//! conditioning vector ([`encoder`], [`control`]), and the dual conditional
//! least-squares adversarial objective used to train against real mels is
//! provided with exact gradients ([`adversarial`]).

pub mod adversarial;
pub mod cli;
pub mod control;
pub mod encoder;
pub mod ingest;
pub mod quantile;
pub mod rng;
pub mod sphere;
pub mod synth;

pub use encoder::{encode_emotion, EmotionEmbedding, EncoderWeights};
pub use ingest::{AvdRecord, Dataset};
pub use sphere::{FenceScope, Octant, SphereModel, SphericalPoint};
