use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::autodiff::{SparseMatrix, Tensor};
use crate::error::{Error, Result};
use crate::graph::{symmetric_adjacency, union_edges, MultiViewGraph};
use crate::model::{ClassTargets, LinkBatch, LinkTargets};
use crate::rng::{self, Stream};
use crate::training::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Val,
    Test,
}

/// Node pairs with one 0/1 label per view.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub pairs: Vec<(usize, usize)>,
    pub labels: Vec<Vec<bool>>,
}

impl EdgeSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn label_tensor(&self, views: usize) -> Tensor {
        Tensor::from_fn(self.pairs.len(), views, |r, c| f64::from(u8::from(self.labels[r][c])))
    }
}

/// Train/validation/test partition of link pairs and labeled nodes, plus
/// the adjacency each view is left with after removing held-out edges.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitPlan {
    pub nodes: usize,
    pub num_views: usize,
    pub num_classes: usize,
    pub train_edges: EdgeSet,
    pub val_edges: EdgeSet,
    pub test_edges: EdgeSet,
    pub train_nodes: Vec<usize>,
    pub val_nodes: Vec<usize>,
    pub test_nodes: Vec<usize>,
    pub labels: Vec<Option<usize>>,
    /// Per view, only the edges of train pairs that exist in that view.
    pub train_views: Vec<SparseMatrix>,
    pub warnings: Vec<String>,
}

impl SplitPlan {
    pub fn edges(&self, part: Partition) -> &EdgeSet {
        match part {
            Partition::Train => &self.train_edges,
            Partition::Val => &self.val_edges,
            Partition::Test => &self.test_edges,
        }
    }

    pub fn nodes_in(&self, part: Partition) -> &[usize] {
        match part {
            Partition::Train => &self.train_nodes,
            Partition::Val => &self.val_nodes,
            Partition::Test => &self.test_nodes,
        }
    }

    pub fn link_targets(&self, part: Partition) -> Result<LinkTargets> {
        let set = self.edges(part);
        if set.is_empty() {
            return Err(Error::InvalidArgument(format!("{part:?} split has no link pairs")));
        }
        LinkTargets::new(LinkBatch::new(set.pairs.clone(), self.nodes)?, set.label_tensor(self.num_views))
    }

    pub fn class_targets(&self, part: Partition) -> Result<ClassTargets> {
        let nodes = self.nodes_in(part).to_vec();
        if nodes.is_empty() {
            return Err(Error::InvalidArgument(format!("{part:?} split has no labeled nodes")));
        }
        let classes = nodes.iter().map(|&u| self.labels[u].expect("split nodes are labeled")).collect();
        ClassTargets::new(nodes, classes, self.nodes, self.num_classes)
    }
}

/// Sizes `(train, val, test)`: `round(f * n)` for training and the rest
/// halved, the odd one going to test.
fn sizes(n: usize, f: f64) -> (usize, usize, usize) {
    let train = ((f * n as f64).round() as usize).min(n);
    let val = (n - train) / 2;
    (train, val, n - train - val)
}

/// Splits union edges and labeled nodes with the seed's split stream.
pub fn split(g: &MultiViewGraph, tc: &TrainConfig) -> Result<SplitPlan> {
    tc.validate()?;
    let n = g.num_nodes();
    let k = g.num_views();
    let mut rng = rng::stream(tc.seed, Stream::Split);

    let mut edges = union_edges(g);
    edges.shuffle(&mut rng);
    let (tr, va, _) = sizes(edges.len(), tc.link_train_fraction);
    let mut sets: Vec<EdgeSet> = [&edges[..tr], &edges[tr..tr + va], &edges[tr + va..]]
        .iter()
        .map(|part| EdgeSet {
            pairs: part.iter().map(|e| (e.u, e.v)).collect(),
            labels: part.iter().map(|e| e.labels.clone()).collect(),
        })
        .collect();

    let mut labeled = g.labeled_nodes();
    labeled.shuffle(&mut rng);
    let (ntr, nva, _) = sizes(labeled.len(), tc.label_train_fraction);
    let test_nodes = labeled.split_off(ntr + nva);
    let val_nodes = labeled.split_off(ntr);
    let train_nodes = labeled;

    let mut warnings = Vec::new();
    let mut train_views = Vec::with_capacity(k);
    for i in 0..k {
        let view = g.view(i)?;
        let kept: Vec<(usize, usize, f64)> = sets[0]
            .pairs
            .iter()
            .zip(&sets[0].labels)
            .filter(|(_, l)| l[i])
            .map(|(&(u, v), _)| (u, v, view.get(u, v).expect("labeled edge exists")))
            .collect();
        if kept.is_empty() {
            warnings.push(format!(
                "view {i} ({}) has no training edges; only self-loops remain",
                g.view_names()[i]
            ));
        }
        train_views.push(symmetric_adjacency(n, &kept)?);
    }

    if tc.sample_nonedges {
        let mut taken: HashSet<(usize, usize)> = edges.iter().map(|e| (e.u, e.v)).collect();
        let mut neg_rng = rng::stream(tc.seed, Stream::NegativeSampling);
        for set in &mut sets {
            let want = set.len();
            let mut attempts = 0;
            let mut added = 0;
            while added < want && attempts < 100 * want.max(1) && n > 1 {
                attempts += 1;
                let a = neg_rng.gen_range(0..n);
                let b = neg_rng.gen_range(0..n);
                let pair = (a.min(b), a.max(b));
                if a == b || !taken.insert(pair) {
                    continue;
                }
                set.pairs.push(pair);
                set.labels.push(vec![false; k]);
                added += 1;
            }
        }
    }

    let [train_edges, val_edges, test_edges]: [EdgeSet; 3] = sets.try_into().expect("three sets");
    Ok(SplitPlan {
        nodes: n,
        num_views: k,
        num_classes: g.num_classes(),
        train_edges,
        val_edges,
        test_edges,
        train_nodes,
        val_nodes,
        test_nodes,
        labels: g.labels().map_or_else(|| vec![None; n], <[_]>::to_vec),
        train_views,
        warnings,
    })
}
