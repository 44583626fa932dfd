//! Multi-view graphs, adjacency preprocessing and view diagnostics.

mod analysis;

pub use analysis::{jaccard_agreement, task_correlation, Agreement};

use std::collections::BTreeMap;

use crate::autodiff::SparseMatrix;
use crate::error::{Error, Result};

/// Tolerance for the symmetry check on adjacency matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// `k` weighted undirected views over one shared node set, with optional
/// class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiViewGraph {
    n: usize,
    views: Vec<SparseMatrix>,
    view_names: Vec<String>,
    labels: Option<Vec<Option<usize>>>,
    num_classes: usize,
}

impl MultiViewGraph {
    /// Validates and wraps pre-built adjacencies.
    ///
    /// Every view must be `n x n`, symmetric, free of self-loops and carry
    /// strictly positive finite weights. `labels`, when given, has one
    /// optional class id per node, each below `num_classes`.
    pub fn new(
        n: usize,
        views: Vec<SparseMatrix>,
        view_names: Vec<String>,
        labels: Option<Vec<Option<usize>>>,
        num_classes: usize,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Graph("at least one view is required".into()));
        }
        if view_names.len() != views.len() {
            return Err(Error::Graph(format!(
                "{} view names for {} views",
                view_names.len(),
                views.len()
            )));
        }
        for (i, v) in views.iter().enumerate() {
            if v.shape() != [n, n] {
                return Err(Error::Graph(format!(
                    "view {i} is {:?}, expected {n}x{n}",
                    v.shape()
                )));
            }
            if let Some((r, c, w)) = v.triplets().find(|&(r, c, w)| r == c || w.is_nan() || w <= 0.0) {
                return Err(Error::Graph(format!(
                    "view {i} has invalid entry ({r}, {c}) = {w}; self-loops and non-positive weights are not allowed"
                )));
            }
            if !v.is_symmetric(SYMMETRY_TOL) {
                return Err(Error::Graph(format!("view {i} is not symmetric")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::Graph(format!(
                    "{} label slots for {n} nodes",
                    labels.len()
                )));
            }
            if let Some(c) = labels.iter().flatten().find(|&&c| c >= num_classes) {
                return Err(Error::Graph(format!(
                    "label {c} outside [0, {num_classes})"
                )));
            }
        }
        Ok(MultiViewGraph {
            n,
            views,
            view_names,
            labels,
            num_classes,
        })
    }

    /// Builds views from undirected edge lists. Both orientations of a pair
    /// are merged by taking the larger weight.
    pub fn from_edges(
        n: usize,
        view_edges: &[Vec<(usize, usize, f64)>],
        view_names: Vec<String>,
        labels: Option<Vec<Option<usize>>>,
        num_classes: usize,
    ) -> Result<Self> {
        let views = view_edges
            .iter()
            .map(|edges| symmetric_adjacency(n, edges))
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, views, view_names, labels, num_classes)
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[SparseMatrix] {
        &self.views
    }

    pub fn view(&self, i: usize) -> Result<&SparseMatrix> {
        self.views
            .get(i)
            .ok_or_else(|| Error::Graph(format!("view {i} out of range (k = {})", self.views.len())))
    }

    pub fn view_names(&self) -> &[String] {
        &self.view_names
    }

    pub fn labels(&self) -> Option<&[Option<usize>]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Nodes carrying a label, ascending.
    pub fn labeled_nodes(&self) -> Vec<usize> {
        match &self.labels {
            Some(l) => (0..self.n).filter(|&u| l[u].is_some()).collect(),
            None => Vec::new(),
        }
    }

    /// Undirected edges `u < v` of one view with their weights.
    pub fn edges(&self, view: usize) -> Result<Vec<(usize, usize, f64)>> {
        Ok(self
            .view(view)?
            .triplets()
            .filter(|&(u, v, _)| u < v)
            .collect())
    }

    /// Same graph with views replaced, e.g. by their training subsets.
    pub fn with_views(&self, views: Vec<SparseMatrix>) -> Result<Self> {
        Self::new(
            self.n,
            views,
            self.view_names.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }
}

/// Symmetric adjacency from undirected edges, merging `(u, v)` and `(v, u)`
/// by maximum weight.
pub fn symmetric_adjacency(n: usize, edges: &[(usize, usize, f64)]) -> Result<SparseMatrix> {
    let mut merged: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for &(u, v, w) in edges {
        if u >= n || v >= n {
            return Err(Error::Graph(format!("edge ({u}, {v}) outside {n} nodes")));
        }
        if u == v {
            return Err(Error::Graph(format!("self-loop on node {u}")));
        }
        let key = (u.min(v), u.max(v));
        let slot = merged.entry(key).or_insert(w);
        *slot = slot.max(w);
    }
    SparseMatrix::from_triplets(
        n,
        n,
        merged
            .into_iter()
            .flat_map(|((u, v), w)| [(u, v, w), (v, u, w)]),
    )
}

/// `D^-1/2 (A + I) D^-1/2` for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedView {
    pub matrix: SparseMatrix,
}

impl NormalizedView {
    pub const SELF_LOOP_WEIGHT: f64 = 1.0;
}

fn check_adjacency(view: &SparseMatrix) -> Result<()> {
    if view.rows() != view.cols() {
        return Err(Error::Graph(format!("adjacency is {:?}, not square", view.shape())));
    }
    if let Some((r, c, w)) = view.triplets().find(|t| t.2 < 0.0) {
        return Err(Error::Graph(format!("negative weight {w} at ({r}, {c})")));
    }
    if !view.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::Graph("adjacency is not symmetric".into()));
    }
    Ok(())
}

/// `A + I`, with stored weights replaced by 1 when `binarize` is set.
/// Explicit zeros are dropped; an existing diagonal entry gets the self-loop
/// added to it.
pub fn augment(view: &SparseMatrix, binarize: bool) -> Result<SparseMatrix> {
    check_adjacency(view)?;
    let n = view.rows();
    let mut triplets = Vec::with_capacity(view.nnz() + n);
    for r in 0..n {
        let mut diag_seen = false;
        for (c, w) in view.row(r) {
            let w = if binarize && w > 0.0 { 1.0 } else { w };
            if c == r {
                diag_seen = true;
                triplets.push((r, c, w + NormalizedView::SELF_LOOP_WEIGHT));
            } else if w > 0.0 {
                triplets.push((r, c, w));
            }
        }
        if !diag_seen {
            triplets.push((r, r, NormalizedView::SELF_LOOP_WEIGHT));
        }
    }
    SparseMatrix::from_triplets(n, n, triplets)
}

/// Symmetric normalisation with self-loops. Degrees come from the weighted
/// adjacency unless `binarize` is set.
pub fn normalize(view: &SparseMatrix, binarize: bool) -> Result<NormalizedView> {
    let tilde = augment(view, binarize)?;
    let inv_sqrt: Vec<f64> = (0..tilde.rows())
        .map(|r| 1.0 / tilde.row(r).map(|(_, w)| w).sum::<f64>().sqrt())
        .collect();
    let values = tilde
        .triplets()
        .map(|(r, c, w)| w * inv_sqrt[r] * inv_sqrt[c])
        .collect();
    let matrix = SparseMatrix::from_csr(
        tilde.rows(),
        tilde.cols(),
        tilde.row_offsets().to_vec(),
        tilde.col_indices().to_vec(),
        values,
    )?;
    Ok(NormalizedView { matrix })
}

/// Embeds a view over the first `view.rows()` nodes into `n_total` nodes;
/// the extra nodes have no edges.
pub fn pad_unobserved(view: &SparseMatrix, n_total: usize) -> Result<SparseMatrix> {
    if view.rows() > n_total || view.cols() > n_total {
        return Err(Error::Graph(format!(
            "cannot pad {:?} down to {n_total}",
            view.shape()
        )));
    }
    let mut offsets = view.row_offsets().to_vec();
    offsets.resize(n_total + 1, view.nnz());
    SparseMatrix::from_csr(
        n_total,
        n_total,
        offsets,
        view.col_indices().to_vec(),
        view.values().to_vec(),
    )
}

/// A node pair present in at least one view, with one membership bit per view.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct UnionEdge {
    pub u: usize,
    pub v: usize,
    pub labels: Vec<bool>,
}

/// Pairs `u < v` connected in any view, in lexicographic order.
pub fn union_edges(g: &MultiViewGraph) -> Vec<UnionEdge> {
    let k = g.num_views();
    let mut out: BTreeMap<(usize, usize), Vec<bool>> = BTreeMap::new();
    for (i, view) in g.views().iter().enumerate() {
        for (u, v, _) in view.triplets().filter(|&(u, v, _)| u < v) {
            out.entry((u, v)).or_insert_with(|| vec![false; k])[i] = true;
        }
    }
    out.into_iter()
        .map(|((u, v), labels)| UnionEdge { u, v, labels })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path2() -> SparseMatrix {
        SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    #[test]
    fn isolated_single_node_normalizes_to_one() {
        let m = normalize(&SparseMatrix::empty(1, 1), false).unwrap().matrix;
        assert_eq!(m.to_dense().data(), &[1.0]);
    }

    #[test]
    fn two_node_path_is_all_halves() {
        let m = normalize(&path2(), false).unwrap().matrix.to_dense();
        for v in m.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn asymmetric_and_negative_rejected() {
        let asym = SparseMatrix::from_triplets(2, 2, [(0, 1, 1.0)]).unwrap();
        assert!(normalize(&asym, false).is_err());
        let neg = SparseMatrix::from_triplets(2, 2, [(0, 1, -1.0), (1, 0, -1.0)]).unwrap();
        assert!(normalize(&neg, false).is_err());
    }

    #[test]
    fn pad_keeps_entries() {
        let m = SparseMatrix::from_triplets(3, 3, [(0, 1, 1.0), (1, 0, 1.0), (1, 2, 2.0), (2, 1, 2.0)])
            .unwrap();
        let p = pad_unobserved(&m, 5).unwrap();
        assert_eq!(p.shape(), [5, 5]);
        assert_eq!(p.nnz(), m.nnz());
        assert_eq!(pad_unobserved(&m, 3).unwrap(), m);
        assert!(pad_unobserved(&m, 2).is_err());
        let norm = normalize(&p, false).unwrap().matrix;
        for u in 3..5 {
            assert_eq!(norm.row(u).collect::<Vec<_>>(), vec![(u, 1.0)]);
        }
    }

    #[test]
    fn graph_rejects_self_loops_and_bad_labels() {
        let loop_view = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0)]).unwrap();
        assert!(MultiViewGraph::new(2, vec![loop_view], vec!["a".into()], None, 0).is_err());
        assert!(MultiViewGraph::new(2, vec![path2()], vec!["a".into()], Some(vec![Some(2), None]), 2).is_err());
        assert!(MultiViewGraph::new(2, vec![path2()], vec!["a".into()], Some(vec![Some(1), None]), 2).is_ok());
    }

    #[test]
    fn union_edges_single_view_all_ones() {
        let g = MultiViewGraph::new(2, vec![path2()], vec!["a".into()], None, 0).unwrap();
        let e = union_edges(&g);
        assert_eq!(e, vec![UnionEdge { u: 0, v: 1, labels: vec![true] }]);
    }

    #[test]
    fn from_edges_symmetrizes_by_max() {
        let g = MultiViewGraph::from_edges(3, &[vec![(0, 1, 1.0), (1, 0, 3.0)]], vec!["a".into()], None, 0)
            .unwrap();
        assert_eq!(g.view(0).unwrap().get(0, 1), Some(3.0));
        assert_eq!(g.view(0).unwrap().get(1, 0), Some(3.0));
    }
}
