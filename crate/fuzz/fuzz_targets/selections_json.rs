#![no_main]

use biomotion::batch::SelectionStore;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(store) = serde_json::from_slice::<SelectionStore>(data) {
        for sel in store.files.values() {
            if let Some(f) = &sel.force {
                let _ = f.validate(0.0, 60.0);
            }
        }
    }
});
