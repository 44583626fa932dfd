#![no_main]

use libfuzzer_sys::fuzz_target;
use mtmv_core::data::parse_labels;

// First two bytes pick the node and class counts.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let (nodes, classes) = (usize::from(data[0]), usize::from(data[1]));
    if let Ok(text) = std::str::from_utf8(&data[2..]) {
        if let Ok(labels) = parse_labels(text, nodes, classes) {
            assert_eq!(labels.len(), nodes);
            assert!(labels.iter().flatten().all(|&c| c < classes));
        }
    }
});
