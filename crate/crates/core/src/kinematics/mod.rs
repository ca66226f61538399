//! Segment orientation from marker clusters and from inertial sensors.

mod cluster;
mod imu;
mod rotation;

use std::path::PathBuf;

use thiserror::Error;

pub use cluster::{cluster_basis, cluster_pipeline, ClusterAngles, ClusterDefinition, ClusterReference, ClusterResult, MIN_TRIANGLE_AREA};
pub use imu::{
    complementary_fuse, imu_pipeline, parse_imu_output, tilt_from_accel, AccUnit, GyroUnit, ImuConfig, ImuOutput, ImuRecord,
    ImuSample, ImuState, write_imu_records, FREE_FALL_G, IMU_HEADER,
};
pub use rotation::{
    euler_from_matrix, euler_from_rotm, quat_from_euler, quat_from_rotm, quat_multiply, quat_normalize, relative_rotation,
    rotm_from_euler, rotm_from_quat, EulerXyz, GIMBAL_THRESHOLD,
};

use crate::model::ModelError;
use crate::plot::PlotError;
use crate::tabular::SchemaError;

#[derive(Debug, Error)]
pub enum KinematicsError {
    #[error("geometry: {0}")]
    Geometry(String),
    #[error(transparent)]
    Model(ModelError),
    #[error("{0}")]
    Parameter(String),
    #[error("sample {index}: {message}")]
    Data { index: usize, message: String },
    #[error("acceleration magnitude {0:.3} g is too small to define tilt")]
    FreeFall(f64),
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Plot(#[from] PlotError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}
