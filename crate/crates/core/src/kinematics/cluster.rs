use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::rotation::{euler_from_rotm, relative_rotation};
use super::KinematicsError;
use crate::model::{MarkerFrameSet, RotationMatrix, Vec3};
use crate::plot::{emit_plot, PlotSeries, PlotStyle};
use crate::tabular::{fmt_sig9, CsvWriter};

/// Smallest triangle area accepted by [`cluster_basis`].
pub const MIN_TRIANGLE_AREA: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusterReference {
    Lab,
    FirstFrame,
    /// Basis built from the marker positions averaged over `[start_s, end_s]`.
    CalibrationWindow { start_s: f64, end_s: f64 },
}

impl Default for ClusterReference {
    fn default() -> Self {
        Self::FirstFrame
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDefinition {
    pub name: String,
    /// Origin-side, axis-defining and plane-defining marker labels.
    pub markers: [String; 3],
    #[serde(default)]
    pub reference: ClusterReference,
}

impl ClusterDefinition {
    pub fn new(name: &str, m1: &str, m2: &str, m3: &str) -> Self {
        Self { name: name.into(), markers: [m1.into(), m2.into(), m3.into()], reference: ClusterReference::FirstFrame }
    }

    fn resolve(&self, set: &MarkerFrameSet) -> Result<[usize; 3], KinematicsError> {
        let [a, b, c] = &self.markers;
        if a == b || b == c || a == c {
            return Err(KinematicsError::Parameter(format!("cluster `{}` repeats a marker label", self.name)));
        }
        let idx = |m: &String| {
            set.marker_index(m)
                .ok_or_else(|| KinematicsError::Parameter(format!("cluster `{}`: marker `{m}` not found", self.name)))
        };
        Ok([idx(a)?, idx(b)?, idx(c)?])
    }
}

/// x along m1→m2, z normal to the marker plane, y completing a right-handed
/// frame. Columns are the axes in lab coordinates.
pub fn cluster_basis(m1: &Vec3, m2: &Vec3, m3: &Vec3) -> Result<RotationMatrix, KinematicsError> {
    let (u, v) = (m2 - m1, m3 - m1);
    let n = u.cross(&v);
    let area = 0.5 * n.norm();
    if !(area > MIN_TRIANGLE_AREA) {
        return Err(KinematicsError::Geometry(format!("markers are collinear (triangle area {area:.3e})")));
    }
    let x = u.normalize();
    let z = x.cross(&v).normalize();
    let y = z.cross(&x);
    Ok(RotationMatrix::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z])))
}

/// Per-cluster angles; NaN where a marker is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAngles {
    pub name: String,
    pub angles: Vec<[f64; 3]>,
    pub gimbal_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub time_s: Vec<f64>,
    pub clusters: Vec<ClusterAngles>,
}

fn frame_basis(set: &MarkerFrameSet, k: usize, idx: &[usize; 3]) -> Option<Result<RotationMatrix, KinematicsError>> {
    let p = [set.position(k, idx[0])?, set.position(k, idx[1])?, set.position(k, idx[2])?];
    Some(cluster_basis(&p[0], &p[1], &p[2]))
}

fn reference_basis(set: &MarkerFrameSet, def: &ClusterDefinition, idx: &[usize; 3]) -> Result<RotationMatrix, KinematicsError> {
    match &def.reference {
        ClusterReference::Lab => Ok(RotationMatrix::identity()),
        ClusterReference::FirstFrame => (0..set.frame_count())
            .find_map(|k| frame_basis(set, k, idx))
            .unwrap_or_else(|| Err(KinematicsError::Geometry(format!("cluster `{}` is never fully visible", def.name)))),
        ClusterReference::CalibrationWindow { start_s, end_s } => {
            let rate = set.rate_hz();
            let mut sums = [Vec3::zeros(); 3];
            let mut count = 0usize;
            for k in 0..set.frame_count() {
                let t = k as f64 / rate;
                if t < start_s - 1e-9 || t > end_s + 1e-9 {
                    continue;
                }
                if let (Some(a), Some(b), Some(c)) =
                    (set.position(k, idx[0]), set.position(k, idx[1]), set.position(k, idx[2]))
                {
                    sums[0] += a;
                    sums[1] += b;
                    sums[2] += c;
                    count += 1;
                }
            }
            if count == 0 {
                return Err(KinematicsError::Parameter(format!(
                    "cluster `{}`: no complete frame in calibration window [{start_s}, {end_s}] s",
                    def.name
                )));
            }
            let n = count as f64;
            cluster_basis(&(sums[0] / n), &(sums[1] / n), &(sums[2] / n))
        }
    }
}

pub fn cluster_pipeline(set: &MarkerFrameSet, clusters: &[ClusterDefinition]) -> Result<ClusterResult, KinematicsError> {
    let rate = set.rate_hz();
    let time_s = (0..set.frame_count()).map(|k| k as f64 / rate).collect();
    let mut out = Vec::with_capacity(clusters.len());
    for def in clusters {
        let idx = def.resolve(set)?;
        let r_ref = reference_basis(set, def, &idx)?;
        let mut angles = Vec::with_capacity(set.frame_count());
        let mut gimbal_frames = Vec::new();
        for k in 0..set.frame_count() {
            match frame_basis(set, k, &idx) {
                Some(Ok(r)) => {
                    let e = euler_from_rotm(&relative_rotation(&r, &r_ref));
                    if e.gimbal {
                        gimbal_frames.push(k);
                    }
                    angles.push(e.as_array());
                }
                // Gaps and momentarily collinear markers both leave a gap.
                _ => angles.push([f64::NAN; 3]),
            }
        }
        out.push(ClusterAngles { name: def.name.clone(), angles, gimbal_frames });
    }
    Ok(ClusterResult { time_s, clusters: out })
}

impl ClusterResult {
    pub fn to_csv(&self) -> String {
        let mut header = vec!["time".to_owned()];
        for c in &self.clusters {
            header.extend(["X", "Y", "Z"].map(|a| format!("{}_{a}", c.name)));
        }
        let mut w = CsvWriter::with_header(&header);
        let cell = |v: f64| if v.is_nan() { String::new() } else { fmt_sig9(v) };
        for (k, t) in self.time_s.iter().enumerate() {
            let mut row = vec![fmt_sig9(*t)];
            for c in &self.clusters {
                row.extend(c.angles[k].iter().map(|v| cell(*v)));
            }
            w.row(&row);
        }
        w.finish()
    }

    pub fn figure(&self, cluster: usize) -> Result<String, KinematicsError> {
        let c = &self.clusters[cluster];
        let series: Vec<PlotSeries> = ["X", "Y", "Z"]
            .iter()
            .enumerate()
            .map(|(i, a)| PlotSeries::new(format!("{}_{a}", c.name), self.time_s.clone(), c.angles.iter().map(|e| e[i]).collect()))
            .collect();
        Ok(emit_plot(&series, &PlotStyle::titled(&format!("{} Euler angles (XYZ)", c.name), "time (s)", "angle (deg)"))?)
    }

    /// `<stem>_cluster.csv` plus `<stem>_<cluster>_figure.svg` per cluster.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, KinematicsError> {
        let mut files = vec![(dir.join(format!("{stem}_cluster.csv")), self.to_csv())];
        for (i, c) in self.clusters.iter().enumerate() {
            if c.angles.iter().any(|a| a[0].is_finite()) {
                files.push((dir.join(format!("{stem}_{}_figure.svg", c.name)), self.figure(i)?));
            }
        }
        let mut out = Vec::new();
        for (p, body) in files {
            fs::write(&p, body).map_err(|source| KinematicsError::Io { path: p.clone(), source })?;
            out.push(p);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tri() -> [Vec3; 3] {
        [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)]
    }

    fn set_from(frames: Vec<[Option<Vec3>; 3]>) -> MarkerFrameSet {
        MarkerFrameSet::new(
            vec!["a".into(), "b".into(), "c".into()],
            frames.into_iter().map(|f| f.to_vec()).collect(),
            100.0,
        )
        .unwrap()
    }

    #[test]
    fn basis_examples() {
        let [a, b, c] = tri();
        assert!(cluster_basis(&a, &b, &c).unwrap().max_abs_diff(&RotationMatrix::identity()) < 1e-15);
        let q = RotationMatrix::rot_z(std::f64::consts::FRAC_PI_2);
        let r = cluster_basis(&q.apply(&a), &q.apply(&b), &q.apply(&c)).unwrap();
        assert!(r.max_abs_diff(&q) < 1e-12);
        assert!(matches!(cluster_basis(&a, &b, &Vec3::new(2.0, 0.0, 0.0)), Err(KinematicsError::Geometry(_))));
    }

    #[test]
    fn pipeline_examples() {
        let [a, b, c] = tri();
        let def = [ClusterDefinition::new("trunk", "a", "b", "c")];
        let stat = set_from(vec![[Some(a), Some(b), Some(c)]; 10]);
        let res = cluster_pipeline(&stat, &def).unwrap();
        assert!(res.clusters[0].angles.iter().all(|e| e.iter().all(|v| *v == 0.0)));

        let frames: Vec<_> = (0..20)
            .map(|k| {
                let q = RotationMatrix::rot_z((k as f64).to_radians());
                let mut f = [Some(q.apply(&a)), Some(q.apply(&b)), Some(q.apply(&c))];
                if k == 7 {
                    f[2] = None;
                }
                f
            })
            .collect();
        let res = cluster_pipeline(&set_from(frames), &def).unwrap();
        for (k, e) in res.clusters[0].angles.iter().enumerate() {
            if k == 7 {
                assert!(e.iter().all(|v| v.is_nan()));
            } else {
                assert!((e[2] - k as f64).abs() < 1e-9 && e[0].abs() < 1e-9 && e[1].abs() < 1e-9);
            }
        }
        let csv = res.to_csv();
        assert!(csv.starts_with("time,trunk_X,trunk_Y,trunk_Z\n"));
        assert_eq!(csv.lines().nth(8).unwrap(), "0.07,,,");
        let bad = [ClusterDefinition::new("t", "a", "a", "c")];
        assert!(cluster_pipeline(&stat, &bad).is_err());
        assert!(cluster_pipeline(&stat, &[ClusterDefinition::new("t", "a", "b", "zz")]).is_err());
    }

    #[test]
    fn reference_options() {
        let [a, b, c] = tri();
        let q = RotationMatrix::rot_x(0.5);
        let frames = vec![[Some(q.apply(&a)), Some(q.apply(&b)), Some(q.apply(&c))]; 5];
        let mut def = ClusterDefinition::new("p", "a", "b", "c");
        def.reference = ClusterReference::Lab;
        let res = cluster_pipeline(&set_from(frames.clone()), &[def.clone()]).unwrap();
        assert!((res.clusters[0].angles[0][0] - 0.5f64.to_degrees()).abs() < 1e-9);
        def.reference = ClusterReference::CalibrationWindow { start_s: 0.0, end_s: 0.02 };
        let res = cluster_pipeline(&set_from(frames), &[def]).unwrap();
        assert!(res.clusters[0].angles[4].iter().all(|v| v.abs() < 1e-9));
    }

    fn vec3() -> impl Strategy<Value = Vec3> {
        (-5.0f64..5.0, -5.0f64..5.0, -5.0f64..5.0).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn translation_invariant_and_equivariant(m in prop::array::uniform3(vec3()), t in vec3(), ang in prop::array::uniform3(-3.0f64..3.0)) {
            let base = cluster_basis(&m[0], &m[1], &m[2]);
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            prop_assume!(0.5 * (m[1] - m[0]).cross(&(m[2] - m[0])).norm() > 0.1);
            let moved = cluster_basis(&(m[0] + t), &(m[1] + t), &(m[2] + t)).unwrap();
            prop_assert!(moved.max_abs_diff(&base) < 1e-12);
            let q = RotationMatrix::rot_x(ang[0]).mul(&RotationMatrix::rot_y(ang[1])).mul(&RotationMatrix::rot_z(ang[2]));
            let rot = cluster_basis(&q.apply(&m[0]), &q.apply(&m[1]), &q.apply(&m[2])).unwrap();
            prop_assert!(rot.max_abs_diff(&q.mul(&base)) < 1e-9);
            prop_assert!(base.orthogonality_error() < 1e-12);
            prop_assert!((base.matrix().determinant() - 1.0).abs() < 1e-12);
        }
    }
}
