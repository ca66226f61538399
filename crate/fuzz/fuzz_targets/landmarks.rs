#![no_main]

use biomotion::tabular::{parse_landmarks, write_landmarks, LandmarkKind};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    for kind in [LandmarkKind::Pixel, LandmarkKind::Normalized] {
        if let Ok(t) = parse_landmarks(s, kind) {
            let _ = write_landmarks(&t);
        }
    }
});
