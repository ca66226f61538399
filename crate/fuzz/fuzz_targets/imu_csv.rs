#![no_main]

use biomotion::kinematics::{imu_pipeline, parse_imu_output, ImuConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(out) = imu_pipeline(s, &ImuConfig::default()) {
        parse_imu_output(&out.csv).expect("pipeline output parses");
    }
    let _ = parse_imu_output(s);
});
