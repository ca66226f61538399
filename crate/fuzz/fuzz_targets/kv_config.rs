#![no_main]

use biomotion::batch::{parse_kv, ToolKind, ToolParams};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(kv) = parse_kv(s) else { return };
    for kind in ToolKind::ALL {
        if let Ok(p) = ToolParams::defaults(kind).with_overrides(&kv) {
            assert_eq!(p.kind(), kind);
            let _ = p.record();
        }
    }
});
