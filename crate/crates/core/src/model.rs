//! Shared value types: uniformly sampled channels, rotations, quaternions and
//! marker trajectories.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 3D vector in meters (positions) or unitless (directions).
pub type Vec3 = Vector3<f64>;

/// Slack used when comparing window bounds against sample times.
const TIME_EPS: f64 = 1e-9;

/// Tolerance used to validate orthonormality and quaternion norms.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("sampling rate must be finite and > 0, got {0}")]
    BadRate(f64),
    #[error("sample {index} is not finite ({value}); only NaN is accepted as a gap marker")]
    NonFinite { index: usize, value: f64 },
    #[error("window [{start}, {end}) outside series extent [{t0}, {t_end}]")]
    Range { start: f64, end: f64, t0: f64, t_end: f64 },
    #[error("series contains {count} gap sample(s) inside the requested window")]
    Gap { count: usize },
    #[error("matrix is not a proper rotation (orthogonality error {ortho:.3e}, det {det})")]
    NotRotation { ortho: f64, det: f64 },
    #[error("cannot normalize a zero quaternion")]
    ZeroQuaternion,
    #[error("frame {frame} has {found} marker slot(s), expected {expected}")]
    FrameShape { frame: usize, found: usize, expected: usize },
}

/// One channel of uniformly sampled values.
///
/// NaN samples mark gaps; any other non-finite value is rejected at
/// construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformSeries {
    values: Vec<f64>,
    rate_hz: f64,
    t0_s: f64,
}

impl UniformSeries {
    pub fn new(values: Vec<f64>, rate_hz: f64, t0_s: f64) -> Result<Self, ModelError> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(ModelError::BadRate(rate_hz));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| v.is_infinite()) {
            return Err(ModelError::NonFinite { index, value });
        }
        let t0_s = if t0_s.is_finite() { t0_s } else { 0.0 };
        Ok(Self { values, rate_hz, t0_s })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn t0_s(&self) -> f64 {
        self.t0_s
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz
    }

    /// Time just past the last sample, `t0 + n / rate`.
    pub fn end_s(&self) -> f64 {
        self.t0_s + self.values.len() as f64 / self.rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.rate_hz
    }

    pub fn time_at(&self, index: usize) -> f64 {
        self.t0_s + index as f64 / self.rate_hz
    }

    /// Sample times `t0 + k / rate`.
    pub fn time_axis(&self) -> Vec<f64> {
        (0..self.values.len()).map(|k| self.time_at(k)).collect()
    }

    /// Same timing, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        Self { values, rate_hz: self.rate_hz, t0_s: self.t0_s }
    }

    pub fn gap_mask(&self) -> Vec<bool> {
        self.values.iter().map(|v| v.is_nan()).collect()
    }

    pub fn gap_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }

    pub fn ensure_no_gaps(&self) -> Result<(), ModelError> {
        match self.gap_count() {
            0 => Ok(()),
            count => Err(ModelError::Gap { count }),
        }
    }

    /// Index range `[first, last)` covered by the time window `[start_s, end_s)`,
    /// with both bounds snapped to the nearest sample boundary.
    pub fn index_window(&self, start_s: f64, end_s: f64) -> Result<(usize, usize), ModelError> {
        let range_err = || ModelError::Range { start: start_s, end: end_s, t0: self.t0_s, t_end: self.end_s() };
        if !(start_s.is_finite() && end_s.is_finite()) || start_s >= end_s {
            return Err(range_err());
        }
        // bounds snap to the nearest sample, so half a sample of slack is allowed
        let slack = 0.5 / self.rate_hz + TIME_EPS;
        if start_s < self.t0_s - slack || end_s > self.end_s() + slack {
            return Err(range_err());
        }
        let first = ((start_s - self.t0_s) * self.rate_hz).round().max(0.0) as usize;
        let last = (((end_s - self.t0_s) * self.rate_hz).round() as usize).min(self.values.len());
        if first >= last {
            return Err(range_err());
        }
        Ok((first, last))
    }

    /// Samples whose time falls in `[start_s, end_s)`.
    pub fn trim(&self, start_s: f64, end_s: f64) -> Result<Self, ModelError> {
        let (first, last) = self.index_window(start_s, end_s)?;
        Ok(self.slice(first, last))
    }

    /// Samples `[first, last)` by index. Panics when out of bounds.
    pub fn slice(&self, first: usize, last: usize) -> Self {
        Self {
            values: self.values[first..last].to_vec(),
            rate_hz: self.rate_hz,
            t0_s: self.time_at(first),
        }
    }
}

/// Proper rotation matrix (orthonormal, det = +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthonormality and handedness within [`ROTATION_TOL`].
    pub fn try_new(m: Matrix3<f64>) -> Result<Self, ModelError> {
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !(ortho < ROTATION_TOL) || !((det - 1.0).abs() <= ROTATION_TOL) {
            return Err(ModelError::NotRotation { ortho, det });
        }
        Ok(Self(m))
    }

    /// Wraps a matrix already known to be a rotation (built from orthonormal
    /// columns by construction).
    pub(crate) fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    pub fn from_columns(x: Vec3, y: Vec3, z: Vec3) -> Result<Self, ModelError> {
        Self::try_new(Matrix3::from_columns(&[x, y, z]))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn mul(&self, other: &RotationMatrix) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Rotation about the lab X axis by `angle` radians.
    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    /// `max |RᵀR − I|`.
    pub fn orthogonality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).abs().max()
    }

    pub fn max_abs_diff(&self, other: &RotationMatrix) -> f64 {
        (self.0 - other.0).abs().max()
    }
}

/// Unit quaternion `w + xi + yj + zk` (Hamilton convention).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Result<Self, ModelError> {
        let n = self.norm();
        if !(n > f64::MIN_POSITIVE) || !n.is_finite() {
            return Err(ModelError::ZeroQuaternion);
        }
        Ok(Self::new(self.w / n, self.x / n, self.y / n, self.z / n))
    }

    /// Sign-flips so that `w >= 0`; `q` and `-q` encode the same rotation.
    pub fn canonical(&self) -> Self {
        if self.w < 0.0 {
            Self::new(-self.w, -self.x, -self.y, -self.z)
        } else {
            *self
        }
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    /// Hamilton product `self * rhs`.
    pub fn multiply(&self, rhs: &Quaternion) -> Self {
        let (a, b) = (self, rhs);
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }

    /// Rotation of `angle` radians about a unit `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let (s, c) = (angle / 2.0).sin_cos();
        Self::new(c, axis.x * s, axis.y * s, axis.z * s)
    }
}

/// Time-indexed 3D positions of named markers. `None` is an explicit gap.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkerFrameSet {
    marker_names: Vec<String>,
    frames: Vec<Vec<Option<Vec3>>>,
    rate_hz: f64,
}

impl MarkerFrameSet {
    pub fn new(marker_names: Vec<String>, frames: Vec<Vec<Option<Vec3>>>, rate_hz: f64) -> Result<Self, ModelError> {
        if !(rate_hz.is_finite() && rate_hz > 0.0) {
            return Err(ModelError::BadRate(rate_hz));
        }
        for (frame, slots) in frames.iter().enumerate() {
            if slots.len() != marker_names.len() {
                return Err(ModelError::FrameShape { frame, found: slots.len(), expected: marker_names.len() });
            }
        }
        Ok(Self { marker_names, frames, rate_hz })
    }

    pub fn marker_names(&self) -> &[String] {
        &self.marker_names
    }

    pub fn frames(&self) -> &[Vec<Option<Vec3>>] {
        &self.frames
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn marker_count(&self) -> usize {
        self.marker_names.len()
    }

    pub fn marker_index(&self, name: &str) -> Option<usize> {
        self.marker_names.iter().position(|n| n == name)
    }

    pub fn position(&self, frame: usize, marker: usize) -> Option<Vec3> {
        self.frames.get(frame).and_then(|f| f.get(marker).copied().flatten())
    }

    /// Multiplies every coordinate by `factor` (unit conversion).
    pub fn scaled(&self, factor: f64) -> Self {
        let frames = self
            .frames
            .iter()
            .map(|f| f.iter().map(|p| p.map(|v| v * factor)).collect())
            .collect();
        Self { marker_names: self.marker_names.clone(), frames, rate_hz: self.rate_hz }
    }

    pub fn select_frames(&self, first: usize, last: usize) -> Self {
        Self {
            marker_names: self.marker_names.clone(),
            frames: self.frames[first..last].to_vec(),
            rate_hz: self.rate_hz,
        }
    }
}

/// Length units accepted by loaders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthUnit {
    M,
    Cm,
    Mm,
}

impl LengthUnit {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "m" | "meter" | "meters" => Some(Self::M),
            "cm" => Some(Self::Cm),
            "mm" => Some(Self::Mm),
            _ => None,
        }
    }

    pub fn meters_per_unit(self) -> f64 {
        match self {
            Self::M => 1.0,
            Self::Cm => 0.01,
            Self::Mm => 0.001,
        }
    }

    /// Factor converting a value in `self` into `target` units.
    pub fn factor_to(self, target: LengthUnit) -> f64 {
        self.meters_per_unit() / target.meters_per_unit()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::M => "m",
            Self::Cm => "cm",
            Self::Mm => "mm",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(n: usize, rate: f64, t0: f64) -> UniformSeries {
        UniformSeries::new((0..n).map(|k| k as f64).collect(), rate, t0).unwrap()
    }

    #[test]
    fn trim_identity_window() {
        let s = ramp(60_000, 1000.0, 0.0);
        assert_eq!(s.trim(0.0, 60.0).unwrap(), s);
    }

    #[test]
    fn trim_one_second_of_ten() {
        let s = ramp(1000, 100.0, 0.0);
        let t = s.trim(2.0, 3.0).unwrap();
        assert_eq!(t.len(), 100);
        assert_eq!(t.t0_s(), 2.0);
        assert_eq!(t.values()[0], 200.0);
        assert_eq!(t.rate_hz(), 100.0);
    }

    #[test]
    fn trim_inverted_window_is_range_error() {
        let s = ramp(1000, 100.0, 0.0);
        assert!(matches!(s.trim(5.0, 2.0), Err(ModelError::Range { .. })));
        assert!(matches!(s.trim(-1.0, 2.0), Err(ModelError::Range { .. })));
        assert!(matches!(s.trim(1.0, 11.0), Err(ModelError::Range { .. })));
        assert!(matches!(s.trim(1.0, 1.001), Err(ModelError::Range { .. })));
    }

    #[test]
    fn time_axis_examples() {
        assert_eq!(ramp(3, 10.0, 0.0).time_axis(), vec![0.0, 0.1, 0.2]);
        assert!(ramp(0, 10.0, 0.0).time_axis().is_empty());
        assert_eq!(ramp(2, 2.0, 1.5).time_axis(), vec![1.5, 2.0]);
    }

    #[test]
    fn constructor_rejects_bad_rate_and_infinities() {
        assert!(matches!(UniformSeries::new(vec![1.0], 0.0, 0.0), Err(ModelError::BadRate(_))));
        assert!(matches!(
            UniformSeries::new(vec![1.0, f64::INFINITY], 1.0, 0.0),
            Err(ModelError::NonFinite { index: 1, .. })
        ));
        let gappy = UniformSeries::new(vec![1.0, f64::NAN, 2.0], 1.0, 0.0).unwrap();
        assert_eq!(gappy.gap_mask(), vec![false, true, false]);
        assert!(gappy.ensure_no_gaps().is_err());
    }

    #[test]
    fn quaternion_normalization() {
        assert!(Quaternion::new(0.0, 0.0, 0.0, 0.0).normalized().is_err());
        let q = Quaternion::new(2.0, 0.0, 0.0, 0.0).normalized().unwrap();
        assert_eq!(q, Quaternion::IDENTITY);
        assert_eq!(Quaternion::new(-1.0, 0.0, 0.0, 0.0).canonical(), Quaternion::IDENTITY);
    }

    #[test]
    fn rotation_validation() {
        assert!(RotationMatrix::try_new(Matrix3::identity() * 2.0).is_err());
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RotationMatrix::try_new(reflect).is_err());
        assert!(RotationMatrix::try_new(*RotationMatrix::rot_z(0.3).matrix()).is_ok());
    }

    #[test]
    fn marker_frames_must_match_names() {
        let err = MarkerFrameSet::new(vec!["a".into()], vec![vec![None, None]], 100.0).unwrap_err();
        assert!(matches!(err, ModelError::FrameShape { frame: 0, found: 2, expected: 1 }));
    }

    proptest! {
        #[test]
        fn trim_is_idempotent(n in 10usize..500, rate in 1.0f64..2000.0, a in 0.0f64..0.5, w in 0.1f64..0.5) {
            let s = ramp(n, rate, 0.0);
            let dur = s.duration_s();
            let (start, end) = (a * dur, (a + w) * dur);
            if let Ok(once) = s.trim(start, end) {
                let twice = once.trim(start, end).unwrap();
                prop_assert_eq!(twice, once);
            }
        }
    }
}
