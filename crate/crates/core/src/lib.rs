//! Multi-task multi-view graph convolutional networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense tensors, CSR sparse matrices and a tape-based
//!   reverse-mode differentiator with a finite-difference checker.
//! - [`graph`]: the multi-view graph model, adjacency normalisation and the
//!   view agreement / label correlation diagnostics.
//! - [`model`]: shared-weight multi-view GCN, view and task attention,
//!   task heads, view reconstruction and the joint loss.
//! - [`training`]: data splits, Adam, the epoch loop with early stopping and
//!   ablation runs.
//! - [`metrics`]: AP / ROC-AUC and classification scores.
//! - [`data`]: the canonical on-disk dataset format and a correlated
//!   stochastic block model generator.
//! - [`run_config`]: the JSON run configuration shared by the command line.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod run_config;
pub mod training;

pub use error::{Error, Result};

/// Version string recorded in run artifacts.
pub const CODE_VERSION: &str = concat!("mtmv-core ", env!("CARGO_PKG_VERSION"));
