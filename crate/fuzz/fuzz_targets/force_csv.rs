#![no_main]

use biomotion::forcecube::parse_force_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_force_csv(s, "Fz", None);
        let _ = parse_force_csv(s, "fz", Some(1000.0));
    }
});
