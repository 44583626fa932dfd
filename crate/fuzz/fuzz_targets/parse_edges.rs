#![no_main]

use libfuzzer_sys::fuzz_target;
use mtmv_core::data::parse_edges;

// First byte picks the node count, the rest is the edge file.
fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let nodes = usize::from(n);
    if let Ok(text) = std::str::from_utf8(rest) {
        if let Ok(edges) = parse_edges(text, "view_0.edges", nodes) {
            for (u, v, w) in edges {
                assert!(u < nodes && v < nodes && u != v);
                assert!(w.is_finite() && w > 0.0);
            }
        }
    }
});
