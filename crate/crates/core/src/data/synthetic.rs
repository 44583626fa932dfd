//! Correlated multi-view stochastic block model.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::MultiViewGraph;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub n: usize,
    pub communities: usize,
    pub views: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Probability that a view copies the base graph's decision for a pair
    /// instead of drawing its own.
    pub rho: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 500,
            communities: 5,
            views: 3,
            p_in: 0.1,
            p_out: 0.01,
            rho: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| p.is_finite() && p > 0.0 && p <= 1.0;
        if self.n == 0 || self.communities == 0 || self.views == 0 {
            return Err(Error::Config("n, communities and views must be positive".into()));
        }
        // p_in == p_out is allowed: it is the uncorrelated reference point.
        if !(prob(self.p_in) && prob(self.p_out) && self.p_in >= self.p_out) {
            return Err(Error::Config(format!(
                "need 1 >= p_in >= p_out > 0, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho {} outside [0, 1]", self.rho)));
        }
        Ok(())
    }
}

/// Draws a graph. Node `u` belongs to community `u % C`, which is also its
/// class label. For every pair a base edge is drawn from the block model;
/// each view then copies it with probability `rho` or redraws it.
pub fn generate(cfg: &SyntheticConfig) -> Result<MultiViewGraph> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, Stream::Generator);
    let c = cfg.communities;
    let mut edges = vec![Vec::new(); cfg.views];
    for u in 0..cfg.n {
        for v in u + 1..cfg.n {
            let p = if u % c == v % c { cfg.p_in } else { cfg.p_out };
            let base = rng.gen::<f64>() < p;
            for view in edges.iter_mut() {
                let inherit = rng.gen::<f64>() < cfg.rho;
                let present = if inherit { base } else { rng.gen::<f64>() < p };
                if present {
                    view.push((u, v, 1.0));
                }
            }
        }
    }
    let names = (0..cfg.views).map(|i| format!("view{i}")).collect();
    let labels = (0..cfg.n).map(|u| Some(u % c)).collect();
    MultiViewGraph::from_edges(cfg.n, &edges, names, Some(labels), c)
}
