//! The spherical emotion space.
//!
//! Pseudo-labels are re-centered on the mean of the neutral records, then
//! expressed as `(r, theta, phi)`: the radius measures how far an utterance
//! sits from neutral (its intensity), the angles say in which direction
//! (its style). Radii are min-max scaled into `[0, 1]` between Tukey fences,
//! and the direction is coarsened to one of the eight sign octants of the
//! arousal/valence/dominance axes.
//!
//! Conventions:
//! - `theta` is the polar angle from the +dominance axis, in `[0, pi]`.
//! - `phi` is the azimuth in the arousal/valence plane, measured from
//!   +arousal towards +valence, in `(-pi, pi]`, and 0 when both are zero.
//! - Octant bits: bit0 = arousal >= 0, bit1 = valence >= 0,
//!   bit2 = dominance >= 0. Zero counts as positive.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AvdRecord, Dataset};
use crate::quantile::{order_independent_sum, quantile_sorted, sorted_copy};

/// Radii below this are treated as the origin, where angles are undefined.
pub const DEGENERATE_EPS: f64 = 1e-8;
/// Tukey fence multiplier.
pub const FENCE_K: f64 = 1.5;
pub const MIN_FENCE_SAMPLES: usize = 4;
pub const NUM_OCTANTS: usize = 8;
pub const MODEL_VERSION: u32 = 1;
pub const QUANTILE_METHOD: &str = "linear-interpolation/type-7";
/// Fence key used under [`FenceScope::Global`].
pub const GLOBAL_KEY: &str = "*";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SphereError {
    #[error("dataset has no records labeled \"neutral\"")]
    NoNeutralRecords,
    #[error("radius {r:e} is below {eps:e}; angles are undefined at the neutral center")]
    DegenerateRadius { r: f64, eps: f64 },
    #[error("group {group:?}: {count} radii, need at least {MIN_FENCE_SAMPLES}")]
    TooFewSamples { group: String, count: usize },
    #[error("group {group:?}: fences collapse (lo = {lo}, hi = {hi})")]
    DegenerateScale { group: String, lo: f64, hi: f64 },
    #[error("octant {0} is outside 0..=7")]
    OctantOutOfRange(i64),
    #[error("no fences for emotion {0:?}")]
    UnknownEmotion(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("unsupported model version {0} (expected {MODEL_VERSION})")]
    UnsupportedVersion(u32),
    #[error("invalid model: {0}")]
    InvalidModel(String),
}

impl SphereError {
    pub fn name(&self) -> &'static str {
        match self {
            Self::NoNeutralRecords => "NoNeutralRecords",
            Self::DegenerateRadius { .. } => "DegenerateRadius",
            Self::TooFewSamples { .. } => "TooFewSamples",
            Self::DegenerateScale { .. } => "DegenerateScale",
            Self::OctantOutOfRange(_) => "OctantOutOfRange",
            Self::UnknownEmotion(_) => "UnknownEmotion",
            Self::NonFinite(_) => "NonFinite",
            Self::UnsupportedVersion(_) => "UnsupportedVersion",
            Self::InvalidModel(_) => "InvalidModel",
        }
    }
}

pub type Result<T> = std::result::Result<T, SphereError>;

/// Mean (arousal, valence, dominance) of the neutral records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NeutralCenter(pub [f64; 3]);

/// A point relative to the neutral center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenteredPoint {
    pub da: f64,
    pub dv: f64,
    pub dd: f64,
}

impl CenteredPoint {
    pub fn new(da: f64, dv: f64, dd: f64) -> Self {
        Self { da, dv, dd }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.da, self.dv, self.dd]
    }

    pub fn scale(self, k: f64) -> Self {
        Self::new(self.da * k, self.dv * k, self.dd * k)
    }

    pub fn norm(self) -> f64 {
        (self.da * self.da + self.dv * self.dv + self.dd * self.dd).sqrt()
    }
}

/// One of the eight sign octants of the centered space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "u8")]
pub struct Octant(u8);

impl Octant {
    pub fn new(id: i64) -> Result<Self> {
        if (0..NUM_OCTANTS as i64).contains(&id) {
            Ok(Self(id as u8))
        } else {
            Err(SphereError::OctantOutOfRange(id))
        }
    }

    pub fn id(self) -> u8 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = Octant> {
        (0..NUM_OCTANTS as u8).map(Octant)
    }

    /// Signs of (arousal, valence, dominance), +1 or -1.
    pub fn signs(self) -> [f64; 3] {
        let sign = |bit: u8| if self.0 & (1 << bit) != 0 { 1.0 } else { -1.0 };
        [sign(0), sign(1), sign(2)]
    }

    /// Unit vector through the octant's centroid direction, `(+-1, +-1, +-1) / sqrt 3`.
    pub fn style_vector(self) -> [f64; 3] {
        let s = 1.0 / 3f64.sqrt();
        self.signs().map(|x| x * s)
    }
}

impl TryFrom<i64> for Octant {
    type Error = SphereError;
    fn try_from(v: i64) -> Result<Self> {
        Octant::new(v)
    }
}

impl From<Octant> for u8 {
    fn from(o: Octant) -> u8 {
        o.0
    }
}

impl fmt::Display for Octant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, v, d] = self.signs().map(|s| if s > 0.0 { '+' } else { '-' });
        write!(f, "{} ({a}A{v}V{d}D)", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
    pub r_norm: Option<f64>,
    pub octant: Option<Octant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusFences {
    pub lo: f64,
    pub hi: f64,
}

impl RadiusFences {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() {
            return Err(SphereError::NonFinite("fences"));
        }
        if lo < 0.0 || hi <= lo {
            return Err(SphereError::InvalidModel(format!("fences need 0 <= lo < hi, got lo = {lo}, hi = {hi}")));
        }
        Ok(Self { lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FenceScope {
    #[default]
    PerEmotion,
    Global,
}

impl fmt::Display for FenceScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerEmotion => "per_emotion",
            Self::Global => "global",
        })
    }
}

/// Fitted center and fences; the persistent artifact of [`fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphereModel {
    pub version: u32,
    pub center: NeutralCenter,
    pub fence_scope: FenceScope,
    pub quantile_method: String,
    pub fences: BTreeMap<String, RadiusFences>,
}

impl SphereModel {
    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(SphereError::UnsupportedVersion(self.version));
        }
        if self.center.0.iter().any(|c| !c.is_finite()) {
            return Err(SphereError::NonFinite("center"));
        }
        if self.quantile_method != QUANTILE_METHOD {
            return Err(SphereError::InvalidModel(format!(
                "quantile_method {:?} (expected {QUANTILE_METHOD:?})",
                self.quantile_method
            )));
        }
        if self.fences.is_empty() {
            return Err(SphereError::InvalidModel("no fences".into()));
        }
        if self.fence_scope == FenceScope::Global
            && (self.fences.len() != 1 || !self.fences.contains_key(GLOBAL_KEY))
        {
            return Err(SphereError::InvalidModel(format!("global scope needs exactly one {GLOBAL_KEY:?} entry")));
        }
        for f in self.fences.values() {
            RadiusFences::new(f.lo, f.hi)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self =
            serde_json::from_str(text).map_err(|e| SphereError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn fences_for(&self, emotion: &str) -> Result<RadiusFences> {
        let key = match self.fence_scope {
            FenceScope::PerEmotion => emotion,
            FenceScope::Global => GLOBAL_KEY,
        };
        self.fences
            .get(key)
            .copied()
            .ok_or_else(|| SphereError::UnknownEmotion(emotion.to_string()))
    }
}

/// Component-wise mean of the neutral records.
///
/// Each component is summed in sorted order, so the result is bit-identical
/// for any permutation of the dataset.
pub fn fit_neutral_center(dataset: &Dataset) -> Result<NeutralCenter> {
    let neutral: Vec<[f64; 3]> = dataset.neutral_records().map(AvdRecord::avd).collect();
    if neutral.is_empty() {
        return Err(SphereError::NoNeutralRecords);
    }
    let n = neutral.len() as f64;
    let mut m = [0.0; 3];
    for (axis, slot) in m.iter_mut().enumerate() {
        let column: Vec<f64> = neutral.iter().map(|p| p[axis]).collect();
        *slot = order_independent_sum(&column) / n;
    }
    if m.iter().any(|c| !c.is_finite()) {
        return Err(SphereError::NonFinite("center"));
    }
    Ok(NeutralCenter(m))
}

pub fn center(e: [f64; 3], m: NeutralCenter) -> CenteredPoint {
    CenteredPoint::new(e[0] - m.0[0], e[1] - m.0[1], e[2] - m.0[2])
}

/// Cartesian to spherical.
///
/// The polar angle is evaluated as `atan2(hypot(da, dv), dd)`, which equals
/// `acos(dd / r)` for every `r > 0` but keeps full precision near the poles.
pub fn to_spherical(p: CenteredPoint, eps: f64) -> Result<SphericalPoint> {
    if !(p.da.is_finite() && p.dv.is_finite() && p.dd.is_finite()) {
        return Err(SphereError::NonFinite("centered point"));
    }
    let r = p.norm();
    if r < eps {
        return Err(SphereError::DegenerateRadius { r, eps });
    }
    let theta = p.da.hypot(p.dv).atan2(p.dd);
    Ok(SphericalPoint { r, theta, phi: azimuth(p.da, p.dv), r_norm: None, octant: None })
}

/// Azimuth in `(-pi, pi]`, 0 on the dominance axis.
fn azimuth(da: f64, dv: f64) -> f64 {
    if da == 0.0 && dv == 0.0 {
        return 0.0;
    }
    let phi = dv.atan2(da);
    if phi <= -PI {
        PI
    } else {
        phi
    }
}

pub fn from_spherical(s: &SphericalPoint) -> CenteredPoint {
    let (st, ct) = s.theta.sin_cos();
    let (sp, cp) = s.phi.sin_cos();
    CenteredPoint::new(s.r * st * cp, s.r * st * sp, s.r * ct)
}

/// Tukey fences on the radii: `lo = max(0, Q1 - 1.5 IQR)`, `hi = Q3 + 1.5 IQR`.
pub fn fit_radius_fences(radii: &[f64]) -> Result<RadiusFences> {
    fit_group_fences(GLOBAL_KEY, radii)
}

fn fit_group_fences(group: &str, radii: &[f64]) -> Result<RadiusFences> {
    if radii.len() < MIN_FENCE_SAMPLES {
        return Err(SphereError::TooFewSamples { group: group.to_string(), count: radii.len() });
    }
    if radii.iter().any(|r| !r.is_finite()) {
        return Err(SphereError::NonFinite("radii"));
    }
    let sorted = sorted_copy(radii);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let lo = (q1 - FENCE_K * iqr).max(0.0);
    let hi = q3 + FENCE_K * iqr;
    if hi <= lo {
        return Err(SphereError::DegenerateScale { group: group.to_string(), lo, hi });
    }
    Ok(RadiusFences { lo, hi })
}

/// Min-max scaling between the fences, clipped to `[0, 1]`.
pub fn normalize_intensity(r: f64, f: RadiusFences) -> f64 {
    ((r - f.lo) / (f.hi - f.lo)).clamp(0.0, 1.0)
}

pub fn quantize_octant(p: CenteredPoint) -> Octant {
    let bit = |x: f64, shift: u8| u8::from(x >= 0.0) << shift;
    Octant(bit(p.da, 0) | bit(p.dv, 1) | bit(p.dd, 2))
}

pub fn octant_style_vector(octant: i64) -> Result<[f64; 3]> {
    Ok(Octant::new(octant)?.style_vector())
}

/// Fits the neutral center, then fences over the radii of all records,
/// grouped by emotion or pooled depending on `scope`.
pub fn fit(dataset: &Dataset, scope: FenceScope) -> Result<SphereModel> {
    let m = fit_neutral_center(dataset)?;
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for rec in &dataset.records {
        let key = match scope {
            FenceScope::PerEmotion => rec.emotion.as_str(),
            FenceScope::Global => GLOBAL_KEY,
        };
        groups.entry(key.to_string()).or_default().push(center(rec.avd(), m).norm());
    }
    let fences = groups
        .iter()
        .map(|(group, radii)| Ok((group.clone(), fit_group_fences(group, radii)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(SphereModel {
        version: MODEL_VERSION,
        center: m,
        fence_scope: scope,
        quantile_method: QUANTILE_METHOD.to_string(),
        fences,
    })
}

/// Centers, converts, normalizes with the record's fences and quantizes.
pub fn transform(record: &AvdRecord, model: &SphereModel) -> Result<SphericalPoint> {
    let fences = model.fences_for(&record.emotion)?;
    let p = center(record.avd(), model.center);
    let mut s = to_spherical(p, DEGENERATE_EPS)?;
    s.r_norm = Some(normalize_intensity(s.r, fences));
    s.octant = Some(quantize_octant(p));
    Ok(s)
}

pub fn transform_all(records: &[AvdRecord], model: &SphereModel) -> Vec<Result<SphericalPoint>> {
    records.iter().map(|r| transform(r, model)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn rec(id: &str, emotion: &str, avd: [f64; 3]) -> AvdRecord {
        AvdRecord {
            utt_id: id.into(),
            speaker_id: "spk".into(),
            emotion: emotion.into(),
            arousal: avd[0],
            valence: avd[1],
            dominance: avd[2],
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    /// Octant from angles only: hemisphere and quadrant tests.
    fn octant_from_angles(theta: f64, phi: f64) -> u8 {
        let b0 = u8::from(phi.cos() >= 0.0);
        let b1 = u8::from(phi.sin() >= 0.0);
        let b2 = u8::from(theta <= PI / 2.0);
        4 * b2 + 2 * b1 + b0
    }

    #[test]
    fn neutral_center_examples() {
        let ds = Dataset::new(vec![rec("a", "neutral", [0.5; 3])]).unwrap();
        assert_eq!(fit_neutral_center(&ds).unwrap().0, [0.5; 3]);

        let ds = Dataset::new(vec![
            rec("a", "neutral", [0.4, 0.6, 0.5]),
            rec("b", "neutral", [0.6, 0.4, 0.5]),
            rec("c", "angry", [0.9, 0.9, 0.9]),
        ])
        .unwrap();
        let m = fit_neutral_center(&ds).unwrap().0;
        for c in m {
            assert!(close(c, 0.5, 1e-15));
        }

        let ds = Dataset::new(vec![rec("c", "angry", [0.9; 3])]).unwrap();
        assert_eq!(fit_neutral_center(&ds), Err(SphereError::NoNeutralRecords));
    }

    #[test]
    fn neutral_center_matches_streaming_mean() {
        let mut rng = SplitMix64::new(11);
        let records: Vec<_> = (0..1000)
            .map(|i| rec(&format!("n{i}"), "neutral", [rng.next_f64(), rng.next_f64(), rng.next_f64()]))
            .collect();
        // Welford-style running mean
        let mut mean = [0.0f64; 3];
        for (k, r) in records.iter().enumerate() {
            for (axis, m) in mean.iter_mut().enumerate() {
                *m += (r.avd()[axis] - *m) / (k as f64 + 1.0);
            }
        }
        let got = fit_neutral_center(&Dataset::new(records).unwrap()).unwrap().0;
        for axis in 0..3 {
            assert!(close(got[axis], mean[axis], 1e-12), "{got:?} vs {mean:?}");
        }
    }

    #[test]
    fn centering_examples() {
        let m = NeutralCenter([0.5; 3]);
        assert_eq!(center([0.5; 3], m), CenteredPoint::new(0.0, 0.0, 0.0));
        assert_eq!(center([1.0, 0.0, 1.0], m), CenteredPoint::new(0.5, -0.5, 0.5));
    }

    #[test]
    fn spherical_axis_and_diagonal_cases() {
        let s = to_spherical(CenteredPoint::new(1.0, 0.0, 0.0), DEGENERATE_EPS).unwrap();
        assert_eq!((s.r, s.phi), (1.0, 0.0));
        assert!(close(s.theta, PI / 2.0, 1e-15));

        let s = to_spherical(CenteredPoint::new(0.0, 0.0, 1.0), DEGENERATE_EPS).unwrap();
        assert_eq!((s.r, s.theta, s.phi), (1.0, 0.0, 0.0));

        let s = to_spherical(CenteredPoint::new(1.0, 1.0, 1.0), DEGENERATE_EPS).unwrap();
        assert!(close(s.r, 1.7320508, 1e-7));
        assert!(close(s.theta, 0.9553166, 1e-7));
        assert!(close(s.phi, std::f64::consts::FRAC_PI_4, 1e-15));

        assert!(matches!(
            to_spherical(CenteredPoint::new(0.0, 0.0, 0.0), DEGENERATE_EPS),
            Err(SphereError::DegenerateRadius { .. })
        ));
    }

    #[test]
    fn azimuth_range_is_half_open_at_minus_pi() {
        let s = to_spherical(CenteredPoint::new(-1.0, -0.0, 0.0), DEGENERATE_EPS).unwrap();
        assert_eq!(s.phi, PI);
        let s = to_spherical(CenteredPoint::new(0.0, -0.0, -2.0), DEGENERATE_EPS).unwrap();
        assert_eq!((s.phi, s.theta), (0.0, PI));
    }

    #[test]
    fn inverse_examples() {
        let p = from_spherical(&SphericalPoint { r: 1.0, theta: PI / 2.0, phi: 0.0, r_norm: None, octant: None });
        assert!(close(p.da, 1.0, 1e-15) && close(p.dv, 0.0, 1e-15) && close(p.dd, 0.0, 1e-15));
        let p = from_spherical(&SphericalPoint {
            r: 3f64.sqrt(),
            theta: 0.9553166,
            phi: PI / 4.0,
            r_norm: None,
            octant: None,
        });
        for c in p.to_array() {
            assert!(close(c, 1.0, 1e-6), "{p:?}");
        }
    }

    #[test]
    fn fence_examples() {
        assert_eq!(fit_radius_fences(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), RadiusFences { lo: 0.0, hi: 7.0 });
        assert!(matches!(fit_radius_fences(&[0.3; 4]), Err(SphereError::DegenerateScale { .. })));
        assert!(matches!(fit_radius_fences(&[0.0; 4]), Err(SphereError::DegenerateScale { .. })));
        assert!(matches!(
            fit_radius_fences(&[1.0, 2.0, 3.0]),
            Err(SphereError::TooFewSamples { count: 3, .. })
        ));
        // lower fence is positive when the spread is small relative to the level
        let f = fit_radius_fences(&[10.0, 10.5, 11.0, 11.5, 12.0]).unwrap();
        assert!(close(f.lo, 10.5 - 1.5, 1e-12) && close(f.hi, 11.5 + 1.5, 1e-12));
    }

    #[test]
    fn normalization_examples() {
        let f = RadiusFences { lo: 0.2, hi: 1.4 };
        assert_eq!(normalize_intensity(f.lo, f), 0.0);
        assert_eq!(normalize_intensity(f.hi, f), 1.0);
        assert!(close(normalize_intensity((f.lo + f.hi) / 2.0, f), 0.5, 1e-15));
        assert_eq!(normalize_intensity(f.hi + 10.0, f), 1.0);
        assert_eq!(normalize_intensity((f.lo - 10.0).max(0.0), f), 0.0);
    }

    #[test]
    fn octant_examples() {
        assert_eq!(quantize_octant(CenteredPoint::new(0.3, 0.3, 0.3)).id(), 7);
        assert_eq!(quantize_octant(CenteredPoint::new(0.3, -0.3, -0.3)).id(), 1);
        assert_eq!(quantize_octant(CenteredPoint::new(0.0, 0.0, 0.0)).id(), 7);
        assert_eq!(quantize_octant(CenteredPoint::new(-0.1, 0.0, -0.2)).id(), 2);
    }

    #[test]
    fn octant_vectors() {
        let s = 1.0 / 3f64.sqrt();
        assert_eq!(octant_style_vector(7).unwrap(), [s, s, s]);
        assert_eq!(octant_style_vector(0).unwrap(), [-s, -s, -s]);
        assert_eq!(octant_style_vector(8), Err(SphereError::OctantOutOfRange(8)));
        assert_eq!(octant_style_vector(-1), Err(SphereError::OctantOutOfRange(-1)));
        let vs: Vec<[f64; 3]> = Octant::all().map(Octant::style_vector).collect();
        for (i, v) in vs.iter().enumerate() {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(close(n, 1.0, 1e-12));
            // the centroid vector lands back in its own octant
            assert_eq!(quantize_octant(CenteredPoint::new(v[0], v[1], v[2])).id() as usize, i);
            for w in &vs[i + 1..] {
                assert_ne!(v, w);
            }
        }
    }

    #[test]
    fn octant_sign_and_angle_agree_on_random_points() {
        let mut rng = SplitMix64::new(5);
        for _ in 0..10_000 {
            let p = CenteredPoint::new(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
            if p.to_array().iter().any(|c| c.abs() <= 1e-9) {
                continue;
            }
            let s = to_spherical(p, DEGENERATE_EPS).unwrap();
            assert_eq!(quantize_octant(p).id(), octant_from_angles(s.theta, s.phi), "{p:?}");
        }
    }

    fn synthetic(seed: u64) -> Dataset {
        let mut rng = SplitMix64::new(seed);
        let mut records = Vec::new();
        for i in 0..200 {
            let p = [0.5, 0.5, 0.5].map(|c| c + rng.uniform(-0.01, 0.01));
            records.push(rec(&format!("n{i}"), "neutral", p));
        }
        for i in 0..200 {
            let p = [0.9, 0.1, 0.9].map(|c| c + rng.uniform(-0.05, 0.05));
            records.push(rec(&format!("a{i}"), "angry", p));
        }
        Dataset::new(records).unwrap()
    }

    #[test]
    fn fit_recovers_synthetic_geometry() {
        let ds = synthetic(17);
        let model = fit(&ds, FenceScope::PerEmotion).unwrap();
        for c in model.center.0 {
            assert!(close(c, 0.5, 0.01));
        }
        assert_eq!(model.fences.keys().collect::<Vec<_>>(), vec!["angry", "neutral"]);
        let angry: Vec<_> = ds.records.iter().filter(|r| r.emotion == "angry").collect();
        let hits = angry
            .iter()
            .filter(|r| matches!(transform(r, &model).unwrap().octant.map(Octant::id), Some(1 | 5)))
            .count();
        assert!(hits as f64 >= 0.95 * angry.len() as f64);

        let global = fit(&ds, FenceScope::Global).unwrap();
        assert_eq!(global.fences.keys().collect::<Vec<_>>(), vec![GLOBAL_KEY]);
        global.validate().unwrap();
    }

    #[test]
    fn fit_errors_carry_group() {
        let ds = Dataset::new(vec![rec("a", "angry", [0.9; 3])]).unwrap();
        assert_eq!(fit(&ds, FenceScope::PerEmotion), Err(SphereError::NoNeutralRecords));

        let mut records: Vec<_> = (0..4).map(|i| rec(&format!("n{i}"), "neutral", [0.5; 3])).collect();
        records.extend((0..4).map(|i| rec(&format!("a{i}"), "angry", [0.9; 3])));
        let ds = Dataset::new(records.clone()).unwrap();
        match fit(&ds, FenceScope::PerEmotion) {
            Err(SphereError::DegenerateScale { group, .. }) => assert_eq!(group, "angry"),
            other => panic!("{other:?}"),
        }

        records.truncate(6);
        let ds = Dataset::new(records).unwrap();
        match fit(&ds, FenceScope::PerEmotion) {
            Err(SphereError::TooFewSamples { group, count }) => assert_eq!((group.as_str(), count), ("angry", 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fit_is_permutation_invariant() {
        let ds = synthetic(23);
        let model = fit(&ds, FenceScope::PerEmotion).unwrap();
        let mut records = ds.records.clone();
        let mut rng = SplitMix64::new(1);
        for i in (1..records.len()).rev() {
            records.swap(i, rng.next_below(i as u64 + 1) as usize);
        }
        let shuffled = fit(&Dataset::new(records).unwrap(), FenceScope::PerEmotion).unwrap();
        assert_eq!(model.to_json(), shuffled.to_json());
        for axis in 0..3 {
            assert_eq!(model.center.0[axis].to_bits(), shuffled.center.0[axis].to_bits());
        }
    }

    #[test]
    fn worked_transform_example() {
        let model = SphereModel {
            version: MODEL_VERSION,
            center: NeutralCenter([0.5; 3]),
            fence_scope: FenceScope::PerEmotion,
            quantile_method: QUANTILE_METHOD.into(),
            fences: BTreeMap::from([("angry".to_string(), RadiusFences { lo: 0.0, hi: 1.0 })]),
        };
        let s = transform(&rec("x", "angry", [1.0, 0.0, 1.0]), &model).unwrap();
        let r = 0.75f64.sqrt();
        assert!(close(s.r, 0.8660254, 1e-7));
        assert!(close(s.r_norm.unwrap(), r, 1e-15));
        assert!(close(s.theta, (0.5 / r).acos(), 1e-12));
        assert!(close(s.phi, -PI / 4.0, 1e-15));
        assert_eq!(s.octant.unwrap().id(), 5);

        assert!(matches!(
            transform(&rec("y", "angry", [0.5; 3]), &model),
            Err(SphereError::DegenerateRadius { .. })
        ));
        assert_eq!(
            transform(&rec("z", "sad", [0.1; 3]), &model),
            Err(SphereError::UnknownEmotion("sad".into()))
        );
    }

    #[test]
    fn model_json_round_trip_and_validation() {
        let model = fit(&synthetic(2), FenceScope::PerEmotion).unwrap();
        let json = model.to_json();
        assert!(json.contains("\"fence_scope\": \"per_emotion\""));
        assert_eq!(SphereModel::from_json(&json).unwrap(), model);

        let bad = json.replace("\"version\": 1", "\"version\": 2");
        assert_eq!(SphereModel::from_json(&bad), Err(SphereError::UnsupportedVersion(2)));
        assert_eq!(SphereModel::from_json("{").unwrap_err().name(), "InvalidModel");
    }

    fn valid_point() -> impl Strategy<Value = SphericalPoint> {
        (1e-6f64..2.0, 0.0f64..=PI, -PI..=PI).prop_map(|(r, theta, phi)| SphericalPoint {
            r,
            theta,
            phi: if phi <= -PI { PI } else { phi },
            r_norm: None,
            octant: None,
        })
    }

    fn angle_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(2.0 * PI);
        d.min(2.0 * PI - d)
    }

    proptest! {
        #[test]
        fn center_inverts(e in prop::array::uniform3(-1.0f64..2.0), m in prop::array::uniform3(-1.0f64..2.0)) {
            let p = center(e, NeutralCenter(m)).to_array();
            for axis in 0..3 {
                prop_assert!((p[axis] + m[axis] - e[axis]).abs() <= 1e-15);
            }
        }

        #[test]
        fn spherical_round_trip(s in valid_point()) {
            let back = to_spherical(from_spherical(&s), DEGENERATE_EPS).unwrap();
            prop_assert!((back.r - s.r).abs() <= 1e-9);
            prop_assert!((back.theta - s.theta).abs() <= 1e-9);
            // azimuth is undefined exactly on the poles
            if s.theta.sin() * s.r > 1e-12 {
                prop_assert!(angle_diff(back.phi, s.phi) <= 1e-9, "{:?} -> {:?}", s, back);
            }
        }

        #[test]
        fn scaling_keeps_direction(p in prop::array::uniform3(-1.0f64..1.0), k in 1e-3f64..1e3) {
            let p = CenteredPoint::new(p[0], p[1], p[2]);
            prop_assume!(p.norm() > 1e-6);
            let a = to_spherical(p, DEGENERATE_EPS).unwrap();
            let b = to_spherical(p.scale(k), DEGENERATE_EPS).unwrap();
            prop_assert!((a.theta - b.theta).abs() <= 1e-12);
            prop_assert!(angle_diff(a.phi, b.phi) <= 1e-12);
            prop_assert_eq!(quantize_octant(p), quantize_octant(p.scale(k)));
        }

        #[test]
        fn normalization_is_monotone_and_bounded(r1 in 0.0f64..5.0, r2 in 0.0f64..5.0, lo in 0.0f64..1.0, w in 1e-3f64..3.0) {
            let f = RadiusFences { lo, hi: lo + w };
            let (a, b) = (normalize_intensity(r1, f), normalize_intensity(r2, f));
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
            if r1 < r2 {
                prop_assert!(a <= b);
            }
        }
    }
}
