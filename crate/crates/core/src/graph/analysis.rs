//! View agreement and edge/label correlation diagnostics.

use crate::error::{Error, Result};
use crate::graph::MultiViewGraph;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub agree: f64,
    pub disagree: f64,
    /// Nodes with a non-empty neighbour set in at least one of the two views.
    pub counted: usize,
}

/// Fraction of nodes whose neighbour sets in two views have Jaccard
/// coefficient above `threshold`.
///
/// Neighbour sets are unweighted. Nodes isolated in both views are left out
/// of the denominator; if every node is, both fractions are zero.
pub fn jaccard_agreement(
    g: &MultiViewGraph,
    view_a: usize,
    view_b: usize,
    threshold: f64,
) -> Result<Agreement> {
    let (a, b) = (g.view(view_a)?, g.view(view_b)?);
    let mut agree = 0usize;
    let mut counted = 0usize;
    for u in 0..g.num_nodes() {
        // Rows are sorted by column, so a merge walk counts the intersection.
        let na: Vec<usize> = a.row(u).map(|(c, _)| c).collect();
        let nb: Vec<usize> = b.row(u).map(|(c, _)| c).collect();
        if na.is_empty() && nb.is_empty() {
            continue;
        }
        let (mut i, mut j, mut inter) = (0, 0, 0usize);
        while i < na.len() && j < nb.len() {
            match na[i].cmp(&nb[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        let union = na.len() + nb.len() - inter;
        counted += 1;
        if inter as f64 / union as f64 > threshold {
            agree += 1;
        }
    }
    if counted == 0 {
        return Ok(Agreement {
            agree: 0.0,
            disagree: 0.0,
            counted,
        });
    }
    let agree = agree as f64 / counted as f64;
    Ok(Agreement {
        agree,
        disagree: 1.0 - agree,
        counted,
    })
}

/// Fraction of a view's edges whose two endpoints share a class label.
/// Edges touching an unlabeled node are skipped.
pub fn task_correlation(g: &MultiViewGraph, view: usize) -> Result<f64> {
    let labels = g
        .labels()
        .ok_or_else(|| Error::Graph("task correlation needs node labels".into()))?;
    let mut same = 0usize;
    let mut total = 0usize;
    for (u, v, _) in g.edges(view)? {
        if let (Some(a), Some(b)) = (labels[u], labels[v]) {
            total += 1;
            same += usize::from(a == b);
        }
    }
    if total == 0 {
        return Err(Error::Graph(format!("view {view} has no labeled edges")));
    }
    Ok(same as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("v{i}")).collect()
    }

    #[test]
    fn identical_views_fully_agree() {
        let e = vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)];
        let g = MultiViewGraph::from_edges(4, &[e.clone(), e], names(2), None, 0).unwrap();
        let a = jaccard_agreement(&g, 0, 1, 0.5).unwrap();
        assert_eq!((a.agree, a.disagree), (1.0, 0.0));
    }

    #[test]
    fn disjoint_neighbourhoods_never_agree() {
        let g = MultiViewGraph::from_edges(
            4,
            &[vec![(0, 1, 1.0), (2, 3, 1.0)], vec![(0, 2, 1.0), (1, 3, 1.0)]],
            names(2),
            None,
            0,
        )
        .unwrap();
        assert_eq!(jaccard_agreement(&g, 0, 1, 0.5).unwrap().agree, 0.0);
    }

    #[test]
    fn view_index_checked() {
        let g = MultiViewGraph::from_edges(2, &[vec![(0, 1, 1.0)]], names(1), None, 0).unwrap();
        assert!(jaccard_agreement(&g, 0, 1, 0.5).is_err());
    }

    #[test]
    fn correlation_extremes() {
        let e = vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)];
        let one = MultiViewGraph::from_edges(4, std::slice::from_ref(&e), names(1), Some(vec![Some(0); 4]), 1).unwrap();
        assert_eq!(task_correlation(&one, 0).unwrap(), 1.0);
        let colored = Some(vec![Some(0), Some(1), Some(0), Some(1)]);
        let two = MultiViewGraph::from_edges(4, &[e], names(1), colored, 2).unwrap();
        assert_eq!(task_correlation(&two, 0).unwrap(), 0.0);
        let unlabeled = MultiViewGraph::from_edges(2, &[vec![(0, 1, 1.0)]], names(1), None, 0).unwrap();
        assert!(task_correlation(&unlabeled, 0).is_err());
    }
}
