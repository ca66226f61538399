#![no_main]

use biomotion::emg::parse_emg_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_emg_csv(s, None);
        let _ = parse_emg_csv(s, Some(2000.0));
    }
});
