use serde::{Deserialize, Serialize};

use super::rotation::{quat_from_euler, EulerXyz};
use super::KinematicsError;
use crate::model::{Quaternion, Vec3};
use crate::tabular::{fmt_sig9, parse_cell, CsvWriter, SchemaError, Table};

/// Output header, byte-for-byte as published (including the space before
/// `Tilt_X`).
pub const IMU_HEADER: &str =
    "Time,Gyro_X,Gyro_Y,Gyro_Z,Acc_X,Acc_Y,Acc_Z,Euler_X,Euler_Y,Euler_Z, Tilt_X,Tilt_Y,Tilt_Z,Quat_W,Quat_X,Quat_Y,Quat_Z";

/// Accelerometer magnitude (g) below which tilt is undefined.
pub const FREE_FALL_G: f64 = 0.1;
pub const STANDARD_GRAVITY: f64 = 9.80665;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GyroUnit {
    #[default]
    DegPerS,
    RadPerS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccUnit {
    #[default]
    G,
    MPerS2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub time_s: f64,
    /// deg/s
    pub gyro: Vec3,
    /// g
    pub acc: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuState {
    pub time_s: f64,
    /// Fused roll/pitch and gyro-integrated yaw, degrees.
    pub euler: EulerXyz,
    /// Accelerometer tilt about X and Y (NaN in free fall) and integrated
    /// yaw, degrees.
    pub tilt: [f64; 3],
    pub quat: Quaternion,
}

/// `(tilt_x, tilt_y)` in degrees from a gravity reading in g.
pub fn tilt_from_accel(acc: &Vec3) -> Result<(f64, f64), KinematicsError> {
    let n = acc.norm();
    if !(n > FREE_FALL_G) {
        return Err(KinematicsError::FreeFall(n));
    }
    let tx = acc.y.atan2(acc.z);
    let ty = (-acc.x).atan2(acc.y.hypot(acc.z));
    Ok((tx.to_degrees(), ty.to_degrees()))
}

/// First-order complementary filter. Roll and pitch blend gyro propagation
/// with accelerometer tilt; yaw is gyro only. The state starts at zero and
/// the first sample is not propagated.
pub fn complementary_fuse(samples: &[ImuSample], rate_hz: f64, alpha: f64) -> Result<Vec<ImuState>, KinematicsError> {
    if !(rate_hz.is_finite() && rate_hz > 0.0) {
        return Err(KinematicsError::Parameter(format!("sampling rate {rate_hz} Hz must be positive")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(KinematicsError::Parameter(format!("alpha {alpha} outside [0, 1]")));
    }
    let dt = 1.0 / rate_hz;
    let mut theta = [0.0f64; 3];
    let mut out = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        if !(s.time_s.is_finite() && s.gyro.iter().chain(s.acc.iter()).all(|v| v.is_finite())) {
            return Err(KinematicsError::Data { index: i, message: "non-finite sensor value".into() });
        }
        let step = if i == 0 { 0.0 } else { dt };
        let mut prop = [theta[0] + s.gyro.x * step, theta[1] + s.gyro.y * step, theta[2] + s.gyro.z * step];
        let tilt = match tilt_from_accel(&s.acc) {
            Ok((tx, ty)) => {
                prop[0] = alpha * prop[0] + (1.0 - alpha) * tx;
                prop[1] = alpha * prop[1] + (1.0 - alpha) * ty;
                [tx, ty, prop[2]]
            }
            Err(_) => [f64::NAN, f64::NAN, prop[2]],
        };
        theta = prop;
        let euler = EulerXyz::new(theta[0], theta[1], theta[2]);
        out.push(ImuState { time_s: s.time_s, euler, tilt, quat: quat_from_euler(&euler) });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImuConfig {
    /// Taken from the time column when absent.
    pub rate_hz: Option<f64>,
    pub alpha: f64,
    pub gyro_unit: GyroUnit,
    pub acc_unit: AccUnit,
    /// Fixed decimals for computed columns; 9 significant digits when absent.
    pub decimals: Option<usize>,
}

impl Default for ImuConfig {
    fn default() -> Self {
        Self { rate_hz: None, alpha: 0.98, gyro_unit: GyroUnit::DegPerS, acc_unit: AccUnit::G, decimals: None }
    }
}

fn number_formatter(decimals: Option<usize>) -> impl Fn(f64) -> String {
    move |v: f64| match (v.is_nan(), decimals) {
        (true, _) => String::new(),
        (false, Some(d)) => format!("{v:.d$}"),
        (false, None) => fmt_sig9(v),
    }
}

const INPUT_COLUMNS: [&str; 7] = ["time", "gyro_x", "gyro_y", "gyro_z", "acc_x", "acc_y", "acc_z"];

#[derive(Debug, Clone, PartialEq)]
pub struct ImuOutput {
    pub states: Vec<ImuState>,
    pub rate_hz: f64,
    pub csv: String,
}

/// Reads `time, gyro_x..acc_z` (case-insensitive), fuses, and renders the
/// 17-column table. Input cells are copied into the output unchanged.
pub fn imu_pipeline(text: &str, cfg: &ImuConfig) -> Result<ImuOutput, KinematicsError> {
    let table = Table::parse(text)?;
    let lower: Vec<String> = table.header.iter().map(|h| h.trim().to_ascii_lowercase()).collect();
    let mut cols = [0usize; 7];
    for (slot, name) in cols.iter_mut().zip(INPUT_COLUMNS) {
        *slot = lower
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SchemaError::at(1, format!("missing column `{name}`")))?;
    }
    let gyro_k = match cfg.gyro_unit {
        GyroUnit::DegPerS => 1.0,
        GyroUnit::RadPerS => 180.0 / std::f64::consts::PI,
    };
    let acc_k = match cfg.acc_unit {
        AccUnit::G => 1.0,
        AccUnit::MPerS2 => 1.0 / STANDARD_GRAVITY,
    };
    let mut samples = Vec::with_capacity(table.rows.len());
    for row in &table.rows {
        let mut v = [0.0; 7];
        for (j, c) in cols.iter().enumerate() {
            v[j] = parse_cell(&row.cells[*c], row.line, &table.header[*c])?
                .ok_or_else(|| SchemaError::at(row.line, format!("empty `{}` cell", INPUT_COLUMNS[j])))?;
        }
        samples.push(ImuSample {
            time_s: v[0],
            gyro: Vec3::new(v[1], v[2], v[3]) * gyro_k,
            acc: Vec3::new(v[4], v[5], v[6]) * acc_k,
        });
    }
    let rate_hz = match cfg.rate_hz {
        Some(r) => r,
        None => {
            if samples.len() < 2 {
                return Err(KinematicsError::Parameter("need two samples or an explicit rate".into()));
            }
            let span = samples[samples.len() - 1].time_s - samples[0].time_s;
            (samples.len() - 1) as f64 / span
        }
    };
    let states = complementary_fuse(&samples, rate_hz, cfg.alpha)?;

    let header: Vec<&str> = IMU_HEADER.split(',').collect();
    let mut w = CsvWriter::with_header(&header);
    let num = number_formatter(cfg.decimals);
    for (row, st) in table.rows.iter().zip(&states) {
        let mut cells: Vec<String> = cols.iter().map(|c| row.cells[*c].trim().to_owned()).collect();
        cells.extend(st.euler.as_array().map(&num));
        cells.extend(st.tilt.map(&num));
        cells.extend([st.quat.w, st.quat.x, st.quat.y, st.quat.z].map(&num));
        w.row(&cells);
    }
    Ok(ImuOutput { states, rate_hz, csv: w.finish() })
}

/// One row of the 17-column output; empty cells are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuRecord {
    pub time_s: f64,
    pub gyro: [f64; 3],
    pub acc: [f64; 3],
    pub euler: [f64; 3],
    pub tilt: [f64; 3],
    pub quat: [f64; 4],
}

/// Parses the 17-column table. Header names are compared after trimming.
pub fn parse_imu_output(text: &str) -> Result<Vec<ImuRecord>, KinematicsError> {
    let table = Table::parse(text)?;
    let expect: Vec<&str> = IMU_HEADER.split(',').map(str::trim).collect();
    let got: Vec<&str> = table.header.iter().map(|h| h.trim()).collect();
    if got != expect {
        return Err(SchemaError::at(1, format!("expected header `{IMU_HEADER}`")).into());
    }
    table
        .rows
        .iter()
        .map(|r| {
            let mut v = [f64::NAN; 17];
            for (j, cell) in r.cells.iter().enumerate() {
                v[j] = parse_cell(cell, r.line, expect[j])?.unwrap_or(f64::NAN);
            }
            Ok(ImuRecord {
                time_s: v[0],
                gyro: [v[1], v[2], v[3]],
                acc: [v[4], v[5], v[6]],
                euler: [v[7], v[8], v[9]],
                tilt: [v[10], v[11], v[12]],
                quat: [v[13], v[14], v[15], v[16]],
            })
        })
        .collect()
}

/// Renders records in the 17-column layout. With `decimals` every value is
/// printed at that fixed precision.
pub fn write_imu_records(records: &[ImuRecord], decimals: Option<usize>) -> String {
    let header: Vec<&str> = IMU_HEADER.split(',').collect();
    let mut w = CsvWriter::with_header(&header);
    let num = number_formatter(decimals);
    for r in records {
        let mut cells = vec![num(r.time_s)];
        for group in [&r.gyro[..], &r.acc, &r.euler, &r.tilt, &r.quat] {
            cells.extend(group.iter().map(|v| num(*v)));
        }
        w.row(&cells);
    }
    w.finish()
}
