//! Direct linear transformation: 8-parameter planar and 11-parameter
//! spatial calibration, and reconstruction from one or more cameras.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{MarkerFrameSet, Vec3};
use crate::tabular::{fmt_exact, parse_cell, CsvWriter, LandmarkTable, SchemaError, Table};

/// Column-scaled condition numbers above this are rejected (calibration)
/// or flagged (reconstruction).
pub const CONDITION_LIMIT: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DltError {
    #[error("{kind} needs at least {needed} {what}, got {got}")]
    Count { kind: &'static str, what: &'static str, needed: usize, got: usize },
    #[error("{0} object and image point lists differ in length")]
    Mismatch(String),
    #[error("ill-conditioned system (condition {condition:.3e}): {hint}")]
    IllConditioned { condition: f64, hint: &'static str },
    #[error("image point ({u}, {v}) lies on the horizon of the mapping")]
    Singular { u: f64, v: f64 },
    #[error("no calibration for camera {camera} at frame {frame}")]
    Coverage { camera: usize, frame: usize },
    #[error("{0}")]
    Parameter(String),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// Column-scaled least squares via SVD. Returns the solution and the
/// condition number of the scaled design matrix.
fn solve_scaled(a: DMatrix<f64>, b: DVector<f64>) -> (DVector<f64>, f64) {
    let mut a = a;
    let scales: Vec<f64> = a
        .column_iter()
        .map(|c| {
            let n = c.norm();
            if n > 0.0 {
                n
            } else {
                1.0
            }
        })
        .collect();
    for (j, s) in scales.iter().enumerate() {
        a.column_mut(j).unscale_mut(*s);
    }
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let mut x = svd.solve(&b, smax * 1e-15).unwrap_or_else(|_| DVector::zeros(scales.len()));
    for (j, s) in scales.iter().enumerate() {
        x[j] /= s;
    }
    (x, condition)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dlt2dParams {
    pub l: [f64; 8],
    /// Root mean square reprojection distance over the control points.
    pub residual_rms: f64,
    pub condition: f64,
}

impl Dlt2dParams {
    pub fn from_coefficients(l: [f64; 8]) -> Self {
        Self { l, residual_rms: 0.0, condition: 1.0 }
    }

    pub fn identity() -> Self {
        Self::from_coefficients([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn project(&self, x: f64, y: f64) -> (f64, f64) {
        let l = &self.l;
        let d = l[6] * x + l[7] * y + 1.0;
        ((l[0] * x + l[1] * y + l[2]) / d, (l[3] * x + l[4] * y + l[5]) / d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dlt3dParams {
    pub l: [f64; 11],
    pub residual_rms: f64,
    pub condition: f64,
}

impl Dlt3dParams {
    pub fn from_coefficients(l: [f64; 11]) -> Self {
        Self { l, residual_rms: 0.0, condition: 1.0 }
    }

    pub fn project(&self, p: &Vec3) -> (f64, f64) {
        let l = &self.l;
        let d = l[8] * p.x + l[9] * p.y + l[10] * p.z + 1.0;
        (
            (l[0] * p.x + l[1] * p.y + l[2] * p.z + l[3]) / d,
            (l[4] * p.x + l[5] * p.y + l[6] * p.z + l[7]) / d,
        )
    }
}

fn rms_distance(pairs: impl Iterator<Item = ((f64, f64), (f64, f64))>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for ((u, v), (pu, pv)) in pairs {
        sum += (u - pu).powi(2) + (v - pv).powi(2);
        n += 1;
    }
    (sum / n.max(1) as f64).sqrt()
}

pub fn dlt2d_calibrate(object: &[(f64, f64)], image: &[(f64, f64)]) -> Result<Dlt2dParams, DltError> {
    if object.len() != image.len() {
        return Err(DltError::Mismatch("2D".into()));
    }
    if object.len() < 4 {
        return Err(DltError::Count { kind: "2D calibration", what: "point pairs", needed: 4, got: object.len() });
    }
    let n = object.len();
    let mut a = DMatrix::zeros(2 * n, 8);
    let mut b = DVector::zeros(2 * n);
    for (i, (&(x, y), &(u, v))) in object.iter().zip(image).enumerate() {
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
        b[r] = u;
        b[r + 1] = v;
    }
    let (sol, condition) = solve_scaled(a, b);
    if !(condition < CONDITION_LIMIT) {
        return Err(DltError::IllConditioned { condition, hint: "control points are collinear or repeated" });
    }
    let mut l = [0.0; 8];
    l.copy_from_slice(sol.as_slice());
    let mut p = Dlt2dParams { l, residual_rms: 0.0, condition };
    p.residual_rms = rms_distance(object.iter().zip(image).map(|(&(x, y), &uv)| (uv, p.project(x, y))));
    Ok(p)
}

pub fn dlt2d_reconstruct(p: &Dlt2dParams, u: f64, v: f64) -> Result<(f64, f64), DltError> {
    let l = &p.l;
    let m = Matrix2::new(l[0] - l[6] * u, l[1] - l[7] * u, l[3] - l[6] * v, l[4] - l[7] * v);
    let scale = m.row(0).norm() * m.row(1).norm();
    let det = m.determinant();
    if !(det.abs() > 1e-12 * scale) || !det.is_finite() {
        return Err(DltError::Singular { u, v });
    }
    let xy = m.try_inverse().ok_or(DltError::Singular { u, v })? * Vector2::new(u - l[2], v - l[5]);
    Ok((xy.x, xy.y))
}

pub fn dlt3d_calibrate(object: &[Vec3], image: &[(f64, f64)]) -> Result<Dlt3dParams, DltError> {
    if object.len() != image.len() {
        return Err(DltError::Mismatch("3D".into()));
    }
    if object.len() < 6 {
        return Err(DltError::Count { kind: "3D calibration", what: "point pairs", needed: 6, got: object.len() });
    }
    let n = object.len();
    let mut a = DMatrix::zeros(2 * n, 11);
    let mut b = DVector::zeros(2 * n);
    for (i, (p, &(u, v))) in object.iter().zip(image).enumerate() {
        let (x, y, z) = (p.x, p.y, p.z);
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[x, y, z, 1.0, 0.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u * z]);
        a.row_mut(r + 1).copy_from_slice(&[0.0, 0.0, 0.0, 0.0, x, y, z, 1.0, -v * x, -v * y, -v * z]);
        b[r] = u;
        b[r + 1] = v;
    }
    let (sol, condition) = solve_scaled(a, b);
    if !(condition < CONDITION_LIMIT) {
        return Err(DltError::IllConditioned { condition, hint: "control volume is coplanar or degenerate" });
    }
    let mut l = [0.0; 11];
    l.copy_from_slice(sol.as_slice());
    let mut p = Dlt3dParams { l, residual_rms: 0.0, condition };
    p.residual_rms = rms_distance(object.iter().zip(image).map(|(o, &uv)| (uv, p.project(o))));
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reconstruction3d {
    pub point: Vec3,
    /// RMS reprojection distance across the views.
    pub residual_rms: f64,
    pub condition: f64,
    /// Rays nearly parallel; the point is poorly determined.
    pub ill_conditioned: bool,
}

pub fn dlt3d_reconstruct(views: &[(Dlt3dParams, (f64, f64))]) -> Result<Reconstruction3d, DltError> {
    if views.len() < 2 {
        return Err(DltError::Count { kind: "3D reconstruction", what: "views", needed: 2, got: views.len() });
    }
    let mut a = DMatrix::zeros(2 * views.len(), 3);
    let mut b = DVector::zeros(2 * views.len());
    for (i, (p, (u, v))) in views.iter().enumerate() {
        let l = &p.l;
        let r = 2 * i;
        a.row_mut(r).copy_from_slice(&[l[0] - l[8] * u, l[1] - l[9] * u, l[2] - l[10] * u]);
        a.row_mut(r + 1).copy_from_slice(&[l[4] - l[8] * v, l[5] - l[9] * v, l[6] - l[10] * v]);
        b[r] = u - l[3];
        b[r + 1] = v - l[7];
    }
    let (x, condition) = solve_scaled(a, b);
    let point = Vec3::new(x[0], x[1], x[2]);
    let residual_rms = rms_distance(views.iter().map(|(p, uv)| (*uv, p.project(&point))));
    Ok(Reconstruction3d { point, residual_rms, condition, ill_conditioned: !(condition < CONDITION_LIMIT) })
}

/// Calibration of one camera: a single parameter set or one per frame.
#[derive(Debug, Clone, PartialEq)]
pub enum CameraCalibration {
    Static(Dlt3dParams),
    PerFrame(BTreeMap<usize, Dlt3dParams>),
}

impl CameraCalibration {
    pub fn at(&self, frame: usize) -> Option<&Dlt3dParams> {
        match self {
            Self::Static(p) => Some(p),
            Self::PerFrame(m) => m.get(&frame),
        }
    }

    /// Per-frame coverage must have no holes.
    pub fn validate(&self, camera: usize) -> Result<(), DltError> {
        if let Self::PerFrame(m) = self {
            if let (Some(first), Some(last)) = (m.keys().next(), m.keys().next_back()) {
                if last - first + 1 != m.len() {
                    let hole = (*first..=*last).find(|f| !m.contains_key(f)).unwrap_or(*first);
                    return Err(DltError::Coverage { camera, frame: hole });
                }
            }
        }
        Ok(())
    }
}

/// One calibration per camera, in camera order.
#[derive(Debug, Clone, PartialEq)]
pub struct DltSeries {
    pub cameras: Vec<CameraCalibration>,
}

/// Reconstructs every landmark seen by at least two cameras in a frame.
/// Landmarks must be in pixel units and share names across cameras.
pub fn reconstruct_series(views: &[LandmarkTable], calib: &DltSeries, rate_hz: f64) -> Result<MarkerFrameSet, DltError> {
    if views.len() != calib.cameras.len() {
        return Err(DltError::Parameter(format!(
            "{} landmark table(s) for {} calibrated camera(s)",
            views.len(),
            calib.cameras.len()
        )));
    }
    if views.len() < 2 {
        return Err(DltError::Count { kind: "3D reconstruction", what: "cameras", needed: 2, got: views.len() });
    }
    for (c, cal) in calib.cameras.iter().enumerate() {
        cal.validate(c)?;
    }
    let names = views[0].landmark_names.clone();
    let mut columns = Vec::with_capacity(views.len());
    for (c, t) in views.iter().enumerate() {
        let idx: Result<Vec<usize>, DltError> = names
            .iter()
            .map(|n| {
                t.landmark_index(n)
                    .ok_or_else(|| DltError::Parameter(format!("camera {c} has no landmark `{n}`")))
            })
            .collect();
        columns.push(idx?);
    }
    let frames = views.iter().map(LandmarkTable::frame_count).max().unwrap_or(0);
    let mut out = Vec::with_capacity(frames);
    for f in 0..frames {
        let mut row = Vec::with_capacity(names.len());
        for m in 0..names.len() {
            let mut obs = Vec::new();
            for (c, t) in views.iter().enumerate() {
                if let Some(Some(p)) = t.frames.get(f).map(|r| r[columns[c][m]]) {
                    let params = calib.cameras[c].at(f).ok_or(DltError::Coverage { camera: c, frame: f })?;
                    obs.push((*params, (p.x, p.y)));
                }
            }
            row.push(if obs.len() >= 2 { Some(dlt3d_reconstruct(&obs)?.point) } else { None });
        }
        out.push(row);
    }
    MarkerFrameSet::new(names, out, rate_hz).map_err(|e| DltError::Parameter(e.to_string()))
}

/// Reads a control-point file `x,y,u,v` (2D) or `x,y,z,u,v` (3D).
pub fn parse_control_points(text: &str) -> Result<(Vec<Vec<f64>>, Vec<(f64, f64)>), DltError> {
    let table = Table::parse(text)?;
    let h: Vec<String> = table.header.iter().map(|s| s.to_ascii_lowercase()).collect();
    let dims = match h.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "u", "v"] => 2,
        ["x", "y", "z", "u", "v"] => 3,
        _ => return Err(SchemaError::at(1, "expected header `x,y,u,v` or `x,y,z,u,v`").into()),
    };
    let (mut obj, mut img) = (Vec::new(), Vec::new());
    for r in &table.rows {
        let mut v = Vec::with_capacity(dims + 2);
        for (j, cell) in r.cells.iter().enumerate() {
            v.push(
                parse_cell(cell, r.line, &table.header[j])?
                    .ok_or_else(|| SchemaError::at(r.line, format!("empty `{}` cell", table.header[j])))?,
            );
        }
        img.push((v[dims], v[dims + 1]));
        v.truncate(dims);
        obj.push(v);
    }
    Ok((obj, img))
}

/// One row of a calibration file.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub camera: usize,
    pub frame: Option<usize>,
    pub l: Vec<f64>,
    pub residual_rms: f64,
}

/// `camera[,frame],L1..Ln,residual` with n = 8 or 11.
pub fn write_calibration_csv(rows: &[CalibrationRow]) -> String {
    let n = rows.first().map_or(11, |r| r.l.len());
    let dynamic = rows.iter().any(|r| r.frame.is_some());
    let mut header = vec!["camera".to_owned()];
    if dynamic {
        header.push("frame".into());
    }
    header.extend((1..=n).map(|i| format!("L{i}")));
    header.push("residual".into());
    let mut w = CsvWriter::with_header(&header);
    for r in rows {
        let mut cells = vec![r.camera.to_string()];
        if dynamic {
            cells.push(r.frame.map(|f| f.to_string()).unwrap_or_default());
        }
        cells.extend(r.l.iter().map(|v| fmt_exact(*v)));
        cells.push(fmt_exact(r.residual_rms));
        w.row(&cells);
    }
    w.finish()
}

pub fn parse_calibration_csv(text: &str) -> Result<Vec<CalibrationRow>, DltError> {
    let table = Table::parse(text)?;
    let h: Vec<String> = table.header.iter().map(|s| s.to_ascii_lowercase()).collect();
    let camera_col = h.iter().position(|c| c == "camera");
    let frame_col = h.iter().position(|c| c == "frame");
    let l_cols: Vec<usize> = (1..=11).map_while(|i| h.iter().position(|c| *c == format!("l{i}"))).collect();
    if l_cols.len() != 8 && l_cols.len() != 11 {
        return Err(SchemaError::at(1, "expected columns L1..L8 or L1..L11").into());
    }
    let residual_col = h.iter().position(|c| c == "residual");
    let expected = l_cols.len() + [camera_col, frame_col, residual_col].iter().flatten().count();
    if expected != h.len() {
        return Err(SchemaError::at(1, "unexpected extra columns in calibration file").into());
    }
    let index = |cell: &str, line: usize, name: &str| -> Result<usize, SchemaError> {
        cell.trim().parse::<usize>().map_err(|_| SchemaError::at(line, format!("`{name}` must be a non-negative integer")))
    };
    let mut out = Vec::new();
    for r in &table.rows {
        let num = |c: usize| -> Result<f64, SchemaError> {
            parse_cell(&r.cells[c], r.line, &table.header[c])?
                .ok_or_else(|| SchemaError::at(r.line, format!("empty `{}` cell", table.header[c])))
        };
        out.push(CalibrationRow {
            camera: camera_col.map(|c| index(&r.cells[c], r.line, "camera")).transpose()?.unwrap_or(0),
            frame: frame_col.map(|c| index(&r.cells[c], r.line, "frame")).transpose()?,
            l: l_cols.iter().map(|&c| num(c)).collect::<Result<_, _>>()?,
            residual_rms: residual_col.map(num).transpose()?.unwrap_or(0.0),
        });
    }
    Ok(out)
}

/// Groups 11-parameter rows into a [`DltSeries`]. Cameras are numbered
/// densely from 0.
pub fn series_from_rows(rows: &[CalibrationRow]) -> Result<DltSeries, DltError> {
    let mut by_cam: BTreeMap<usize, Vec<&CalibrationRow>> = BTreeMap::new();
    for r in rows {
        if r.l.len() != 11 {
            return Err(DltError::Parameter("3D reconstruction needs 11-parameter calibrations".into()));
        }
        by_cam.entry(r.camera).or_default().push(r);
    }
    let mut cameras = Vec::new();
    for (i, (cam, rs)) in by_cam.into_iter().enumerate() {
        if cam != i {
            return Err(DltError::Parameter(format!("camera numbers must start at 0 and be contiguous, found {cam}")));
        }
        let params = |r: &CalibrationRow| {
            let mut l = [0.0; 11];
            l.copy_from_slice(&r.l);
            Dlt3dParams { l, residual_rms: r.residual_rms, condition: f64::NAN }
        };
        let cal = if rs.len() == 1 && rs[0].frame.is_none() {
            CameraCalibration::Static(params(rs[0]))
        } else {
            let mut m = BTreeMap::new();
            for r in rs {
                let f = r.frame.ok_or_else(|| DltError::Parameter(format!("camera {cam}: mixed static and per-frame rows")))?;
                if m.insert(f, params(r)).is_some() {
                    return Err(DltError::Parameter(format!("camera {cam}: frame {f} calibrated twice")));
                }
            }
            CameraCalibration::PerFrame(m)
        };
        cal.validate(cam)?;
        cameras.push(cal);
    }
    Ok(DltSeries { cameras })
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;
    use crate::model::RotationMatrix;

    /// Pinhole camera at `centre` looking along the rotated −z axis, as DLT
    /// coefficients (normalised so the constant denominator term is 1).
    pub fn pinhole(rot: &RotationMatrix, centre: Vec3, focal: f64, cx: f64, cy: f64) -> Dlt3dParams {
        let r = rot.transpose();
        let rm = r.matrix();
        let t = -(rm * centre);
        // Projection rows: K·[R | t], with depth along +z of the camera.
        let k = nalgebra::Matrix3::new(focal, 0.0, cx, 0.0, focal, cy, 0.0, 0.0, 1.0);
        let mut p = nalgebra::Matrix3x4::zeros();
        p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(k * rm));
        p.set_column(3, &(k * t));
        let d = p[(2, 3)];
        let p = p / d;
        Dlt3dParams::from_coefficients([
            p[(0, 0)],
            p[(0, 1)],
            p[(0, 2)],
            p[(0, 3)],
            p[(1, 0)],
            p[(1, 1)],
            p[(1, 2)],
            p[(1, 3)],
            p[(2, 0)],
            p[(2, 1)],
            p[(2, 2)],
        ])
    }

    /// Camera `dist` from the origin on a bearing `yaw` (radians) about Z,
    /// looking at the origin.
    pub fn ring_camera(yaw: f64, dist: f64) -> Dlt3dParams {
        let centre = Vec3::new(dist * yaw.cos(), dist * yaw.sin(), 1.0);
        let fwd = (-centre).normalize();
        let right = fwd.cross(&Vec3::z()).normalize();
        let down = fwd.cross(&right);
        let rot = RotationMatrix::from_columns(right, down, fwd).unwrap();
        pinhole(&rot, centre, 1000.0, 640.0, 360.0)
    }
}

#[cfg(test)]
mod tests {
    use super::oracle::ring_camera;
    use super::*;
    use crate::tabular::{LandmarkKind, LandmarkPoint};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn square() -> Vec<(f64, f64)> {
        vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    }

    #[test]
    fn calib2d_examples() {
        let p = dlt2d_calibrate(&square(), &square()).unwrap();
        for (a, b) in p.l.iter().zip(Dlt2dParams::identity().l) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(p.residual_rms < 1e-12);
        let scaled: Vec<_> = square().iter().map(|&(x, y)| (2.0 * x, 2.0 * y)).collect();
        let p = dlt2d_calibrate(&square(), &scaled).unwrap();
        assert!((p.l[0] - 2.0).abs() < 1e-12 && (p.l[4] - 2.0).abs() < 1e-12 && p.l[6].abs() < 1e-12);
        assert!(matches!(dlt2d_calibrate(&square()[..3], &square()[..3]), Err(DltError::Count { .. })));
        let line: Vec<_> = (0..6).map(|k| (k as f64, 2.0 * k as f64)).collect();
        assert!(matches!(dlt2d_calibrate(&line, &line), Err(DltError::IllConditioned { .. })));
    }

    #[test]
    fn projective_recovery_2d() {
        let truth = Dlt2dParams::from_coefficients([120.0, 8.0, 300.0, -5.0, 110.0, 200.0, 0.02, -0.01]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let obj: Vec<(f64, f64)> = (0..10).map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect();
        let img: Vec<_> = obj.iter().map(|&(x, y)| truth.project(x, y)).collect();
        let p = dlt2d_calibrate(&obj, &img).unwrap();
        assert!(p.residual_rms < 1e-9, "{}", p.residual_rms);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let (x, y) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let (u, v) = truth.project(x, y);
            let (rx, ry) = dlt2d_reconstruct(&truth, u, v).unwrap();
            worst = worst.max((rx - x).abs()).max((ry - y).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn reconstruct2d_examples() {
        assert_eq!(dlt2d_reconstruct(&Dlt2dParams::identity(), 3.0, 4.0).unwrap(), (3.0, 4.0));
        let p = Dlt2dParams::from_coefficients([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.5, 0.0]);
        assert!(matches!(dlt2d_reconstruct(&p, 2.0, 1.0), Err(DltError::Singular { .. })));
    }

    fn cube() -> Vec<Vec3> {
        (0..8).map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64)).collect()
    }

    #[test]
    fn calib3d_examples() {
        let cam = ring_camera(0.4, 6.0);
        let img: Vec<_> = cube().iter().map(|p| cam.project(p)).collect();
        let p = dlt3d_calibrate(&cube(), &img).unwrap();
        assert!(p.residual_rms < 1e-8, "{}", p.residual_rms);
        for (a, b) in p.l.iter().zip(cam.l) {
            assert!((a - b).abs() < 1e-6 * b.abs().max(1.0));
        }
        assert!(matches!(dlt3d_calibrate(&cube()[..5], &img[..5]), Err(DltError::Count { got: 5, .. })));
        let flat: Vec<Vec3> = (0..9).map(|i| Vec3::new((i % 3) as f64, (i / 3) as f64, 0.0)).collect();
        let img: Vec<_> = flat.iter().map(|p| cam.project(p)).collect();
        assert!(matches!(dlt3d_calibrate(&flat, &img), Err(DltError::IllConditioned { .. })));
    }

    #[test]
    fn coplanar_condition_oracle() {
        // Oracle: the z columns of the design matrix vanish, so its smallest
        // singular value is zero regardless of scaling.
        let cam = ring_camera(1.0, 5.0);
        let flat: Vec<Vec3> = (0..9).map(|i| Vec3::new((i % 3) as f64, (i / 3) as f64, 0.0)).collect();
        let mut a = DMatrix::zeros(18, 11);
        for (i, p) in flat.iter().enumerate() {
            let (u, v) = cam.project(p);
            a.row_mut(2 * i).copy_from_slice(&[p.x, p.y, p.z, 1.0, 0.0, 0.0, 0.0, 0.0, -u * p.x, -u * p.y, -u * p.z]);
            a.row_mut(2 * i + 1).copy_from_slice(&[0.0, 0.0, 0.0, 0.0, p.x, p.y, p.z, 1.0, -v * p.x, -v * p.y, -v * p.z]);
        }
        assert_eq!(a.svd(false, false).singular_values.min(), 0.0);
    }

    #[test]
    fn two_views_exact() {
        let (c1, c2) = (ring_camera(0.0, 6.0), ring_camera(1.3, 6.0));
        let p = Vec3::new(0.3, -0.2, 0.7);
        let r = dlt3d_reconstruct(&[(c1, c1.project(&p)), (c2, c2.project(&p))]).unwrap();
        assert!((r.point - p).abs().max() < 1e-9);
        assert!(!r.ill_conditioned);
        assert!(matches!(dlt3d_reconstruct(&[(c1, c1.project(&p))]), Err(DltError::Count { .. })));
    }

    /// Linearised error covariance trace σ²·tr((JᵀJ)⁻¹) from a
    /// finite-difference Jacobian of the projections.
    fn linear_envelope(cams: &[Dlt3dParams], p: &Vec3, sigma: f64) -> f64 {
        let h = 1e-6;
        let mut j = DMatrix::zeros(2 * cams.len(), 3);
        for (i, c) in cams.iter().enumerate() {
            for k in 0..3 {
                let mut d = Vec3::zeros();
                d[k] = h;
                let (up, vp) = c.project(&(p + d));
                let (um, vm) = c.project(&(p - d));
                j[(2 * i, k)] = (up - um) / (2.0 * h);
                j[(2 * i + 1, k)] = (vp - vm) / (2.0 * h);
            }
        }
        let cov = (j.transpose() * j).try_inverse().unwrap() * sigma * sigma;
        cov.trace().sqrt()
    }

    #[test]
    fn noisy_views_within_monte_carlo_envelope() {
        let cams = [ring_camera(0.0, 6.0), ring_camera(2.1, 6.0), ring_camera(4.2, 6.0)];
        let p = Vec3::new(0.1, 0.2, 0.5);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let trials = 2000;
        let mut sq = [0.0; 2];
        for _ in 0..trials {
            for (slot, n) in [2usize, 3].iter().enumerate() {
                let views: Vec<_> = cams[..*n]
                    .iter()
                    .map(|c| {
                        let (u, v) = c.project(&p);
                        (*c, (u + noise.sample(&mut rng), v + noise.sample(&mut rng)))
                    })
                    .collect();
                let r = dlt3d_reconstruct(&views).unwrap();
                let e = (r.point - p).norm();
                assert!(e < 6.0 * linear_envelope(&cams[..*n], &p, 0.5));
                sq[slot] += e * e;
            }
        }
        let rms = sq.map(|s| (s / trials as f64).sqrt());
        let env3 = linear_envelope(&cams, &p, 0.5);
        assert!(rms[1] < rms[0], "{rms:?}");
        assert!((rms[1] / env3 - 1.0).abs() < 0.1, "{} vs {env3}", rms[1]);
    }

    fn table(points: Vec<Vec<Option<(f64, f64)>>>) -> LandmarkTable {
        LandmarkTable {
            kind: LandmarkKind::Pixel,
            landmark_names: vec!["a".into()],
            axes: vec!["x".into(), "y".into()],
            frames: points
                .into_iter()
                .map(|r| r.into_iter().map(|p| p.map(|(x, y)| LandmarkPoint { x, y, z: None, visibility: None })).collect())
                .collect(),
        }
    }

    fn trajectory(f: usize) -> Vec3 {
        Vec3::new(0.01 * f as f64, 0.3 * (f as f64 * 0.2).sin(), 0.5)
    }

    #[test]
    fn moving_camera_series() {
        let frames = 30;
        let cam_at = |c: usize, f: usize| ring_camera(c as f64 * 1.5 + (0.1 * f as f64).to_radians(), 6.0);
        let views: Vec<LandmarkTable> = (0..2)
            .map(|c| table((0..frames).map(|f| vec![Some(cam_at(c, f).project(&trajectory(f)))]).collect()))
            .collect();
        let series = DltSeries {
            cameras: (0..2).map(|c| CameraCalibration::PerFrame((0..frames).map(|f| (f, cam_at(c, f))).collect())).collect(),
        };
        let set = reconstruct_series(&views, &series, 100.0).unwrap();
        for f in 0..frames {
            assert!((set.position(f, 0).unwrap() - trajectory(f)).abs().max() < 1e-6);
        }
        let mut short = series.clone();
        if let CameraCalibration::PerFrame(m) = &mut short.cameras[1] {
            m.retain(|f, _| *f < 12);
        }
        let err = reconstruct_series(&views, &short, 100.0).unwrap_err();
        assert_eq!(err, DltError::Coverage { camera: 1, frame: 12 });
        assert!(err.to_string().contains("frame 12"));
    }

    #[test]
    fn static_replicated_matches_static() {
        let cams = [ring_camera(0.2, 6.0), ring_camera(1.9, 6.0)];
        let frames = 10;
        let mut views: Vec<LandmarkTable> =
            cams.iter().map(|c| table((0..frames).map(|f| vec![Some(c.project(&trajectory(f)))]).collect())).collect();
        views[1].frames[4][0] = None;
        let fixed = DltSeries { cameras: cams.iter().map(|c| CameraCalibration::Static(*c)).collect() };
        let per = DltSeries {
            cameras: cams.iter().map(|c| CameraCalibration::PerFrame((0..frames).map(|f| (f, *c)).collect())).collect(),
        };
        let (a, b) = (reconstruct_series(&views, &fixed, 50.0).unwrap(), reconstruct_series(&views, &per, 50.0).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.position(4, 0), None);
    }

    #[test]
    fn calibration_csv_round_trip() {
        let rows = vec![
            CalibrationRow { camera: 0, frame: Some(0), l: ring_camera(0.0, 5.0).l.to_vec(), residual_rms: 0.25 },
            CalibrationRow { camera: 0, frame: Some(1), l: ring_camera(0.01, 5.0).l.to_vec(), residual_rms: 0.0 },
            CalibrationRow { camera: 1, frame: Some(0), l: ring_camera(1.0, 5.0).l.to_vec(), residual_rms: 1e-3 },
        ];
        let text = write_calibration_csv(&rows);
        assert!(text.starts_with("camera,frame,L1,"));
        assert_eq!(parse_calibration_csv(&text).unwrap(), rows);
        let series = series_from_rows(&rows).unwrap();
        assert!(matches!(series.cameras[1], CameraCalibration::PerFrame(_)));
        let holes = vec![rows[0].clone(), CalibrationRow { frame: Some(3), ..rows[1].clone() }];
        assert!(matches!(series_from_rows(&holes), Err(DltError::Coverage { frame: 1, .. })));
        let (obj, img) = parse_control_points("x,y,z,u,v\n0,0,0,10,20\n1,0,0,11,20\n").unwrap();
        assert_eq!(obj[1], vec![1.0, 0.0, 0.0]);
        assert_eq!(img[0], (10.0, 20.0));
        assert!(parse_control_points("a,b\n1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn scaled_object_consistency(s in 0.1f64..20.0, seed in 0u64..1000) {
            let truth = Dlt2dParams::from_coefficients([120.0, 8.0, 300.0, -5.0, 110.0, 200.0, 0.02, -0.01]);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let obj: Vec<(f64, f64)> = (0..8).map(|_| (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0))).collect();
            let img: Vec<_> = obj.iter().map(|&(x, y)| truth.project(x, y)).collect();
            let scaled: Vec<_> = obj.iter().map(|&(x, y)| (s * x, s * y)).collect();
            let p = dlt2d_calibrate(&obj, &img).unwrap();
            let q = dlt2d_calibrate(&scaled, &img).unwrap();
            for i in [0usize, 1, 3, 4, 6, 7] {
                prop_assert!((q.l[i] * s - p.l[i]).abs() < 1e-6 * p.l[i].abs().max(1e-3));
            }
            for (&(x, y), &(u, v)) in scaled.iter().zip(&img) {
                let (rx, ry) = dlt2d_reconstruct(&q, u, v).unwrap();
                prop_assert!((rx - x).abs() < 1e-7 * s.max(1.0) && (ry - y).abs() < 1e-7 * s.max(1.0));
            }
        }
    }
}
