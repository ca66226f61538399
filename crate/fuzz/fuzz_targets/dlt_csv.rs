#![no_main]

use biomotion::dlt::{parse_calibration_csv, parse_control_points, series_from_rows};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = parse_control_points(s);
    if let Ok(rows) = parse_calibration_csv(s) {
        let _ = series_from_rows(&rows);
    }
});
