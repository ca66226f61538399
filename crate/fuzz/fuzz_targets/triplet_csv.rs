#![no_main]

use biomotion::c3d::{csv_to_c3d, parse_triplet_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_triplet_csv(s, 100.0);
        let _ = csv_to_c3d(s, 100.0);
    }
});
