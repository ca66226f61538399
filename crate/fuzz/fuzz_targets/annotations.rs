#![no_main]

use biomotion::tabular::{read_annotations, write_annotations};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(t) = read_annotations(s) {
            let text = write_annotations(&t);
            assert_eq!(read_annotations(&text).expect("written annotations parse"), t);
        }
    }
});
