#![no_main]

use biomotion::tabular::parse_sync_table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_sync_table(s);
    }
});
