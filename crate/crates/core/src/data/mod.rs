//! Dataset I/O and synthetic graph generation.

mod canonical;
mod synthetic;

pub use canonical::{load, parse_edges, parse_labels, parse_meta, save, DatasetMeta};
pub use synthetic::{generate, SyntheticConfig};

