#![no_main]

use biomotion::tabular::Table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = Table::parse(s) {
            assert!(t.rows.iter().all(|r| r.cells.len() == t.header.len()));
        }
    }
});
