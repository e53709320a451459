//! Seeded synthetic pseudo-label datasets with known geometry.
//!
//! Each emotion is a uniform cube of noise around a prototype point. The
//! prototypes sit well away from the neutral center's axis planes, so the
//! octant each emotion should land in is known in advance.

use crate::ingest::{AvdRecord, Dataset, NEUTRAL};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prototype {
    pub emotion: &'static str,
    pub center: [f64; 3],
    pub half_width: f64,
    /// Octant the cluster occupies relative to the neutral prototype.
    pub expected_octant: Option<u8>,
}

pub const NEUTRAL_CENTER: [f64; 3] = [0.5, 0.5, 0.5];

pub const PROTOTYPES: [Prototype; 5] = [
    Prototype { emotion: NEUTRAL, center: NEUTRAL_CENTER, half_width: 0.02, expected_octant: None },
    // +A -V +D
    Prototype { emotion: "angry", center: [0.85, 0.2, 0.8], half_width: 0.05, expected_octant: Some(5) },
    // +A +V +D
    Prototype { emotion: "happy", center: [0.8, 0.85, 0.7], half_width: 0.05, expected_octant: Some(7) },
    // -A -V -D
    Prototype { emotion: "sad", center: [0.2, 0.2, 0.25], half_width: 0.05, expected_octant: Some(0) },
    // +A +V -D
    Prototype { emotion: "surprise", center: [0.85, 0.75, 0.3], half_width: 0.05, expected_octant: Some(3) },
];

pub const SPEAKERS: usize = 10;

pub fn expected_octant(emotion: &str) -> Option<u8> {
    PROTOTYPES.iter().find(|p| p.emotion == emotion).and_then(|p| p.expected_octant)
}

/// `per_emotion` records for each prototype, emotions in [`PROTOTYPES`]
/// order, speakers assigned round-robin.
pub fn synthetic_dataset(seed: u64, per_emotion: usize) -> Dataset {
    let mut rng = SplitMix64::new(seed);
    let mut records = Vec::with_capacity(per_emotion * PROTOTYPES.len());
    for proto in &PROTOTYPES {
        for i in 0..per_emotion {
            let [a, v, d] = proto.center.map(|c| c + rng.uniform(-proto.half_width, proto.half_width));
            records.push(AvdRecord {
                utt_id: format!("{}_{i:05}", proto.emotion),
                speaker_id: format!("spk{:02}", i % SPEAKERS),
                emotion: proto.emotion.to_string(),
                arousal: a,
                valence: v,
                dominance: d,
            });
        }
    }
    Dataset::new(records).expect("generated ids are unique")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_labeled() {
        let a = synthetic_dataset(1, 20);
        assert_eq!(a, synthetic_dataset(1, 20));
        assert_ne!(a, synthetic_dataset(2, 20));
        assert_eq!(a.len(), 100);
        assert_eq!(a.emotions_present.len(), 5);
        assert_eq!(a.neutral_records().count(), 20);
    }

    #[test]
    fn prototypes_sit_in_their_octants() {
        for p in PROTOTYPES.iter().filter(|p| p.expected_octant.is_some()) {
            let d = [0, 1, 2].map(|k| p.center[k] - NEUTRAL_CENTER[k]);
            // clusters never straddle an axis plane
            assert!(d.iter().all(|x| x.abs() > p.half_width + PROTOTYPES[0].half_width));
            let oct = crate::sphere::quantize_octant(crate::sphere::CenteredPoint::new(d[0], d[1], d[2]));
            assert_eq!(Some(oct.id()), p.expected_octant);
        }
    }
}
