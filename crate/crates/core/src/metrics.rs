//! Link prediction and node classification metrics.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkScores {
    pub ap: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub f1_macro: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision_micro: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1_micro: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimeStats {
    pub mean: f64,
    pub std: f64,
}

impl TimeStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return TimeStats::default();
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        TimeStats {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Evaluation summary of one trained model. Tasks that were not evaluated
/// serialise as `null`.
///
/// Timing is kept out of the serialised form so that reports of identical
/// runs compare byte-for-byte.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub link: Option<LinkScores>,
    pub classification: Option<ClassificationScores>,
    pub reconstruction_mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_view_link: Option<Vec<Option<LinkScores>>>,
    #[serde(skip)]
    pub epoch_time_seconds: TimeStats,
}

fn class_counts(labels: &[bool]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l).count();
    (pos, labels.len() - pos)
}

fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Area under the ROC curve in Mann-Whitney form: the probability that a
/// random positive scores above a random negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let (pos, neg) = class_counts(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(
            "ROC-AUC needs both positive and negative labels".into(),
        ));
    }
    let mut order = descending(scores);
    order.reverse();
    // Sum of mid-ranks (1-based) of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid_rank = (i + j) as f64 / 2.0 + 1.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += mid_rank * pos_in_group as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * n))
}

/// Step-wise average precision, `sum_k (R_k - R_{k-1}) P_k`, over descending
/// score thresholds with tied scores forming a single threshold.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let (pos, _) = class_counts(labels);
    if pos == 0 {
        return Err(Error::UndefinedMetric(
            "average precision needs at least one positive".into(),
        ));
    }
    let order = descending(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    Ok(ap)
}

/// Accuracy with macro-averaged precision and F1.
///
/// Classes that appear in neither `truth` nor `pred` are left out of the
/// macro mean; a class never predicted has precision 0.
pub fn classification_metrics(
    pred: &[usize],
    truth: &[usize],
    num_classes: usize,
) -> Result<ClassificationScores> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("no nodes to classify".into()));
    }
    if let Some(c) = pred.iter().chain(truth).find(|&&c| c >= num_classes) {
        return Err(Error::InvalidArgument(format!(
            "class {c} outside [0, {num_classes})"
        )));
    }
    let mut tp = vec![0usize; num_classes];
    let mut predicted = vec![0usize; num_classes];
    let mut actual = vec![0usize; num_classes];
    for (&p, &t) in pred.iter().zip(truth) {
        predicted[p] += 1;
        actual[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let correct: usize = tp.iter().sum();
    let accuracy = correct as f64 / pred.len() as f64;

    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let mut precision_sum = 0.0;
    let mut f1_sum = 0.0;
    let mut present = 0usize;
    for c in 0..num_classes {
        if predicted[c] == 0 && actual[c] == 0 {
            continue;
        }
        present += 1;
        let p = ratio(tp[c], predicted[c]);
        let r = ratio(tp[c], actual[c]);
        precision_sum += p;
        f1_sum += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    Ok(ClassificationScores {
        accuracy,
        precision_macro: precision_sum / present as f64,
        f1_macro: f1_sum / present as f64,
        precision_micro: None,
        f1_micro: None,
    })
}

/// Micro-averaged precision and F1 for single-label predictions; both equal
/// accuracy.
pub fn with_micro(mut scores: ClassificationScores) -> ClassificationScores {
    scores.precision_micro = Some(scores.accuracy);
    scores.f1_micro = Some(scores.accuracy);
    scores
}

/// AP and AUC over every `(edge, view)` cell, flattened row-major.
pub fn link_metrics(probabilities: &[f64], labels: &[bool]) -> Result<LinkScores> {
    Ok(LinkScores {
        ap: average_precision(probabilities, labels)?,
        auc: roc_auc(probabilities, labels)?,
    })
}

/// AP and AUC for each view column separately; `None` where a column has
/// only one class.
pub fn per_view_link_metrics(
    probabilities: &[f64],
    labels: &[bool],
    k: usize,
) -> Vec<Option<LinkScores>> {
    (0..k)
        .map(|view| {
            let s: Vec<f64> = probabilities.iter().skip(view).step_by(k).copied().collect();
            let l: Vec<bool> = labels.iter().skip(view).step_by(k).copied().collect();
            link_metrics(&s, &l).ok()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_perfect_and_ties() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn ap_edge_cases() {
        assert_eq!(average_precision(&[0.9, 0.1, 0.2], &[true, false, false]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.3, 0.1], &[true, true]).unwrap(), 1.0);
        assert!(average_precision(&[0.3], &[false]).is_err());
    }

    #[test]
    fn classification_hand_cases() {
        let s = classification_metrics(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!((s.accuracy, s.precision_macro, s.f1_macro), (1.0, 1.0, 1.0));
        let s = classification_metrics(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(s.accuracy, 0.5);
        assert_eq!(s.precision_macro, 0.25);
        assert!((s.f1_macro - 1.0 / 3.0).abs() < 1e-12);
        let s = classification_metrics(&[0, 0], &[0, 0], 1).unwrap();
        assert_eq!((s.accuracy, s.precision_macro, s.f1_macro), (1.0, 1.0, 1.0));
        assert!(classification_metrics(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn single_view_link_metrics_match_binary() {
        let p = [0.2, 0.7, 0.4, 0.9];
        let l = [false, true, false, true];
        let flat = link_metrics(&p, &l).unwrap();
        assert_eq!(flat.auc, roc_auc(&p, &l).unwrap());
        assert_eq!(flat.ap, average_precision(&p, &l).unwrap());
    }
}
