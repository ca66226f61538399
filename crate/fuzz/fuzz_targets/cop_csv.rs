#![no_main]

use biomotion::cop::parse_cop_csv;
use biomotion::model::LengthUnit;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_cop_csv(s, "cx", "cy", None, LengthUnit::Cm);
        let _ = parse_cop_csv(s, "COPx", "COPy", Some(100.0), LengthUnit::Mm);
    }
});
