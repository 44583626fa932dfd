#![no_main]

use libfuzzer_sys::fuzz_target;
use mtmv_core::data::parse_meta;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(meta) = parse_meta(text) {
            assert_eq!(meta.view_names.len(), meta.views);
        }
    }
});
