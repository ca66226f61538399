use std::path::{Path, PathBuf};

use biomotion::c3d::write_triplet_csv;
use biomotion::dlt::{
    dlt2d_calibrate, dlt2d_reconstruct, dlt3d_calibrate, parse_calibration_csv, parse_control_points,
    reconstruct_series, series_from_rows, write_calibration_csv, CalibrationRow, CameraCalibration, Dlt2dParams,
};
use biomotion::model::Vec3;
use biomotion::tabular::{parse_landmarks, write_landmarks, LandmarkKind, LandmarkPoint, LandmarkTable};
use clap::{Args, Subcommand};

use crate::util::{read, write, Failure};

#[derive(Debug, Subcommand)]
pub enum DltCmd {
    /// 8-parameter planar calibration from `x,y,u,v` control points.
    Calib2d(CalibArgs),
    /// 11-parameter calibration from `x,y,z,u,v` control points.
    Calib3d(CalibArgs),
    /// Planar coordinates from a pixel landmark CSV.
    Rec2d {
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Calibration row to use.
        #[arg(long, default_value_t = 0)]
        camera: usize,
    },
    /// 3D triplet CSV from one pixel landmark CSV per camera, static calibration.
    Rec3d(Rec3dArgs),
    /// As `rec3d`, accepting per-frame calibrations.
    Rec3dSeries(Rec3dArgs),
}

#[derive(Debug, Args)]
pub struct CalibArgs {
    /// One control-point file per camera, in camera order.
    #[arg(long, required = true)]
    input: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Tag the rows with this frame (per-frame calibration).
    #[arg(long)]
    frame: Option<usize>,
    /// Add the rows to an existing calibration file.
    #[arg(long)]
    append: bool,
}

#[derive(Debug, Args)]
pub struct Rec3dArgs {
    #[arg(long)]
    calib: PathBuf,
    /// One pixel landmark CSV per camera, in camera order.
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Frame rate written to the time column.
    #[arg(long, default_value_t = 30.0)]
    rate: f64,
}

fn calibrate(args: &CalibArgs, dims: usize) -> Result<u8, Failure> {
    let mut rows = if args.append && args.output.exists() {
        parse_calibration_csv(&read(&args.output)?).map_err(|e| Failure::data(&args.output, e))?
    } else {
        Vec::new()
    };
    for (camera, path) in args.input.iter().enumerate() {
        let (obj, img) = parse_control_points(&read(path)?).map_err(|e| Failure::data(path, e))?;
        if obj.first().is_some_and(|o| o.len() != dims) {
            return Err(Failure::data(path, format!("expected {dims}D control points")));
        }
        let (l, residual, condition) = if dims == 2 {
            let o: Vec<(f64, f64)> = obj.iter().map(|v| (v[0], v[1])).collect();
            let p = dlt2d_calibrate(&o, &img).map_err(|e| Failure::data(path, e))?;
            (p.l.to_vec(), p.residual_rms, p.condition)
        } else {
            let o: Vec<Vec3> = obj.iter().map(|v| Vec3::new(v[0], v[1], v[2])).collect();
            let p = dlt3d_calibrate(&o, &img).map_err(|e| Failure::data(path, e))?;
            (p.l.to_vec(), p.residual_rms, p.condition)
        };
        println!("camera {camera}: residual {residual:.6} px, condition {condition:.3e}");
        rows.retain(|r| !(r.camera == camera && r.frame == args.frame));
        rows.push(CalibrationRow { camera, frame: args.frame, l, residual_rms: residual });
    }
    rows.sort_by_key(|r| (r.camera, r.frame));
    write(&args.output, write_calibration_csv(&rows))?;
    Ok(0)
}

fn rec2d(calib: &Path, input: &Path, output: &Path, camera: usize) -> Result<u8, Failure> {
    let rows = parse_calibration_csv(&read(calib)?).map_err(|e| Failure::data(calib, e))?;
    let row = rows
        .iter()
        .find(|r| r.camera == camera && r.l.len() == 8)
        .ok_or_else(|| Failure::data(calib, format!("no 8-parameter calibration for camera {camera}")))?;
    let mut l = [0.0; 8];
    l.copy_from_slice(&row.l);
    let params = Dlt2dParams::from_coefficients(l);
    let t = parse_landmarks(&read(input)?, LandmarkKind::Pixel).map_err(|e| Failure::data(input, e))?;
    let mut frames = Vec::with_capacity(t.frames.len());
    for (f, row) in t.frames.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for p in row {
            out.push(match p {
                Some(p) => {
                    let (x, y) = dlt2d_reconstruct(&params, p.x, p.y)
                        .map_err(|e| Failure::data(input, format!("frame {f}: {e}")))?;
                    Some(LandmarkPoint { x, y, z: None, visibility: None })
                }
                None => None,
            });
        }
        frames.push(out);
    }
    let table = LandmarkTable {
        kind: LandmarkKind::Pixel,
        landmark_names: t.landmark_names,
        axes: vec!["x".into(), "y".into()],
        frames,
    };
    write(output, write_landmarks(&table))?;
    Ok(0)
}

fn rec3d(args: &Rec3dArgs, allow_per_frame: bool) -> Result<u8, Failure> {
    let rows = parse_calibration_csv(&read(&args.calib)?).map_err(|e| Failure::data(&args.calib, e))?;
    let series = series_from_rows(&rows).map_err(|e| Failure::data(&args.calib, e))?;
    if !allow_per_frame && series.cameras.iter().any(|c| matches!(c, CameraCalibration::PerFrame(_))) {
        return Err(Failure::usage("per-frame calibration given; use `dlt rec3d-series`"));
    }
    let views = args
        .input
        .iter()
        .map(|p| parse_landmarks(&read(p)?, LandmarkKind::Pixel).map_err(|e| Failure::data(p, e)))
        .collect::<Result<Vec<_>, _>>()?;
    let set = reconstruct_series(&views, &series, args.rate).map_err(|e| Failure::fatal(e.to_string()))?;
    let rate = args.rate;
    write(&args.output, write_triplet_csv(&set, |k| k as f64 / rate))?;
    Ok(0)
}

pub fn run(cmd: &DltCmd) -> Result<u8, Failure> {
    match cmd {
        DltCmd::Calib2d(a) => calibrate(a, 2),
        DltCmd::Calib3d(a) => calibrate(a, 3),
        DltCmd::Rec2d { calib, input, output, camera } => rec2d(calib, input, output, *camera),
        DltCmd::Rec3d(a) => rec3d(a, false),
        DltCmd::Rec3dSeries(a) => rec3d(a, true),
    }
}
