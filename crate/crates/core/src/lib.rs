//! Batch analysis of biomechanics recordings: C3D motion capture, force
//! plates, EMG, posturography, IMU orientation, camera calibration and
//! video landmark tables.

pub mod batch;
pub mod c3d;
pub mod cop;
pub mod dlt;
pub mod dsp;
pub mod emg;
pub mod forcecube;
pub mod kinematics;
pub mod model;
pub mod plot;
pub mod tabular;
