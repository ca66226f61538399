#![no_main]

use biomotion::c3d::{c3d_to_csv, read_c3d, write_c3d};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(doc) = read_c3d(data) {
        let _ = c3d_to_csv(&doc);
        // Anything the reader accepts must survive our own writer and reader.
        if let Ok(bytes) = write_c3d(&doc) {
            let back = read_c3d(&bytes).expect("re-read of written file");
            assert_eq!(back.frame_count(), doc.frame_count());
            assert_eq!(back.points.marker_names(), doc.points.marker_names());
        }
    }
});
