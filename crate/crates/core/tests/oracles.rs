//! Library results against direct loop implementations of the definitions.

mod common;

use std::sync::Arc;

use common::{naive_matmul, random_adjacency, random_tensor, rng};
use mtmv_core::autodiff::{SparseMatrix, Tape, Tensor};
use mtmv_core::graph::{normalize, union_edges, MultiViewGraph};
use mtmv_core::metrics::{average_precision, roc_auc};
use mtmv_core::model::{task_attention, view_attention, AttentionMode};
use mtmv_core::rng::{stream, Stream};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const INSTANCES: u64 = 25;

fn dense_from_triplets(rows: usize, cols: usize, trips: &[(usize, usize, f64)]) -> Tensor {
    let mut t = Tensor::zeros(rows, cols);
    for &(r, c, w) in trips {
        t.set(r, c, t.get(r, c) + w);
    }
    t
}

fn assert_close(a: &Tensor, b: &Tensor, tol: f64, what: &str) {
    assert_eq!(a.shape(), b.shape(), "{what}: shape");
    let d = a.max_abs_diff(b);
    assert!(d <= tol, "{what}: max abs diff {d}");
}

#[test]
fn spmm_matches_dense_product() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (m, k, n) = (r.gen_range(1..8), r.gen_range(1..8), r.gen_range(1..5));
        let mut trips = Vec::new();
        for i in 0..m {
            for j in 0..k {
                if r.gen_bool(0.4) {
                    trips.push((i, j, r.gen_range(-2.0..2.0)));
                }
            }
        }
        let s = Arc::new(SparseMatrix::from_triplets(m, k, trips.clone()).unwrap());
        let x = random_tensor(&mut r, k, n);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = tape.spmm(&s, xv).unwrap();
        let expected = naive_matmul(&dense_from_triplets(m, k, &trips), &x);
        assert_close(tape.value(y), &expected, 1e-12, "spmm");
    }
}

#[test]
fn softmax_matches_definition() {
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let x = Tensor::from_fn(r.gen_range(1..6), r.gen_range(1..6), |_, _| r.gen_range(-30.0..30.0));
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let y = tape.softmax(xv, 1).unwrap();
        let expected = Tensor::from_fn(x.rows(), x.cols(), |i, j| {
            let max = x.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = x.row(i).iter().map(|v| (v - max).exp()).sum();
            (x.get(i, j) - max).exp() / z
        });
        assert_close(tape.value(y), &expected, 1e-12, "softmax rows");

        let yc = tape.softmax(xv, 0).unwrap();
        let t = x.transpose();
        let expected_t = Tensor::from_fn(t.rows(), t.cols(), |i, j| {
            let max = t.row(i).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = t.row(i).iter().map(|v| (v - max).exp()).sum();
            (t.get(i, j) - max).exp() / z
        });
        assert_close(tape.value(yc), &expected_t.transpose(), 1e-12, "softmax cols");
    }
}

#[test]
fn dropout_statistics() {
    let rate = 0.3;
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::ones(300, 300));
    let y = tape.dropout(x, rate, true, &mut stream(11, Stream::Dropout)).unwrap();
    let v = tape.value(y);
    let zeros = v.data().iter().filter(|&&e| e == 0.0).count() as f64 / v.len() as f64;
    let kept = 1.0 / (1.0 - rate);
    assert!(v.data().iter().all(|&e| e == 0.0 || (e - kept).abs() < 1e-12));
    assert!((zeros - rate).abs() < 0.01, "drop fraction {zeros}");
    let mean = v.sum() / v.len() as f64;
    assert!((mean - 1.0).abs() < 0.015, "mean {mean}");

    let off = tape.dropout(x, rate, false, &mut stream(11, Stream::Dropout)).unwrap();
    assert_eq!(tape.value(off), &Tensor::ones(300, 300));
}

fn random_graph(r: &mut ChaCha8Rng, n: usize, k: usize) -> (MultiViewGraph, Vec<Tensor>) {
    let views: Vec<SparseMatrix> = (0..k)
        .map(|_| {
            let p = r.gen_range(0.1..0.6);
            random_adjacency(r, n, p)
        })
        .collect();
    let dense = views.iter().map(SparseMatrix::to_dense).collect();
    let names = (0..k).map(|i| format!("v{i}")).collect();
    (MultiViewGraph::new(n, views, names, None, 1).unwrap(), dense)
}

#[test]
fn normalization_matches_brute_force() {
    for seed in 0..INSTANCES {
        let mut r = rng(100 + seed);
        let n = r.gen_range(1..12);
        let view = random_adjacency(&mut r, n, 0.4);
        let a = view.to_dense();
        for binarize in [false, true] {
            let at = Tensor::from_fn(n, n, |i, j| {
                let w = if binarize && a.get(i, j) > 0.0 { 1.0 } else { a.get(i, j) };
                w + if i == j { 1.0 } else { 0.0 }
            });
            let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| at.get(i, j)).sum()).collect();
            let expected = Tensor::from_fn(n, n, |i, j| at.get(i, j) / (deg[i] * deg[j]).sqrt());
            let got = normalize(&view, binarize).unwrap().matrix.to_dense();
            assert_close(&got, &expected, 1e-12, "normalize");
        }
    }
}

#[test]
fn union_edges_match_brute_force() {
    for seed in 0..INSTANCES {
        let mut r = rng(200 + seed);
        let (n, k) = (r.gen_range(2..15), r.gen_range(1..4));
        let (g, dense) = random_graph(&mut r, n, k);
        let mut expected = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let labels: Vec<bool> = dense.iter().map(|a| a.get(u, v) != 0.0).collect();
                if labels.iter().any(|&b| b) {
                    expected.push((u, v, labels));
                }
            }
        }
        let got: Vec<_> = union_edges(&g).into_iter().map(|e| (e.u, e.v, e.labels)).collect();
        assert_eq!(got, expected);
    }
}

/// Per-node view attention written out element by element.
#[allow(clippy::needless_range_loop)]
fn view_attention_oracle(
    zs: &[Tensor],
    aug: &[Tensor],
    wq: &Tensor,
    wk: &Tensor,
    wv: &Tensor,
    heads: usize,
    scale_after: bool,
) -> (Tensor, Vec<Tensor>) {
    let k = zs.len();
    let (n, d) = (zs[0].rows(), wq.cols());
    let dh = d / heads;
    let q: Vec<Tensor> = zs.iter().map(|z| naive_matmul(z, wq)).collect();
    let keys: Vec<Tensor> = zs.iter().map(|z| naive_matmul(z, wk)).collect();
    let vals: Vec<Tensor> = zs
        .iter()
        .zip(aug)
        .map(|(z, a)| naive_matmul(&naive_matmul(a, z), wv))
        .collect();
    let mut out = Tensor::zeros(n, d);
    let mut weights = vec![Tensor::zeros(n, k); heads];
    for h in 0..heads {
        for u in 0..n {
            let mut logits = vec![0.0; k];
            for i in 0..k {
                for c in h * dh..(h + 1) * dh {
                    let qm: f64 = q.iter().map(|t| t.get(u, c)).sum::<f64>() / k as f64;
                    logits[i] += qm * keys[i].get(u, c);
                }
                if !scale_after {
                    logits[i] /= (dh as f64).sqrt();
                }
            }
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
            for i in 0..k {
                weights[h].set(u, i, (logits[i] - max).exp() / z);
            }
            for c in h * dh..(h + 1) * dh {
                let mut s: f64 = (0..k).map(|i| weights[h].get(u, i) * vals[i].get(u, c)).sum();
                if scale_after {
                    s /= (dh as f64).sqrt();
                }
                out.set(u, c, s);
            }
        }
    }
    (out, weights)
}

#[test]
fn view_attention_matches_oracle() {
    for seed in 0..INSTANCES {
        let mut r = rng(300 + seed);
        let (n, k) = (r.gen_range(2..9), r.gen_range(1..4));
        let heads = r.gen_range(1..4);
        let d = heads * r.gen_range(1..4);
        let (g, _) = random_graph(&mut r, n, k);
        let aug: Vec<Arc<SparseMatrix>> = g
            .views()
            .iter()
            .map(|v| Arc::new(mtmv_core::graph::augment(v, false).unwrap()))
            .collect();
        // A + I built here rather than taken from `augment`.
        let aug_dense: Vec<Tensor> = g
            .views()
            .iter()
            .map(|v| {
                let a = v.to_dense();
                Tensor::from_fn(n, n, |i, j| a.get(i, j) + if i == j { 1.0 } else { 0.0 })
            })
            .collect();
        let zs: Vec<Tensor> = (0..k).map(|_| random_tensor(&mut r, n, d)).collect();
        let (wq, wk, wv) = (
            random_tensor(&mut r, d, d),
            random_tensor(&mut r, d, d),
            random_tensor(&mut r, d, d),
        );
        for scale_after in [false, true] {
            let mut tape = Tape::new();
            let zv: Vec<_> = zs.iter().map(|z| tape.leaf(z.clone())).collect();
            let (q, kk, v) = (tape.leaf(wq.clone()), tape.leaf(wk.clone()), tape.leaf(wv.clone()));
            let got = view_attention(&mut tape, &zv, &aug, q, kk, v, heads, AttentionMode::Learned, scale_after).unwrap();
            let (out, weights) = view_attention_oracle(&zs, &aug_dense, &wq, &wk, &wv, heads, scale_after);
            assert_close(tape.value(got.output), &out, 1e-10, "view attention output");
            for (h, w) in weights.iter().enumerate() {
                assert_close(tape.value(got.weights[h]), w, 1e-12, "view attention weights");
            }
        }

        let mut tape = Tape::new();
        let zv: Vec<_> = zs.iter().map(|z| tape.leaf(z.clone())).collect();
        let (q, kk, v) = (tape.leaf(wq.clone()), tape.leaf(wk.clone()), tape.leaf(wv.clone()));
        let got = view_attention(&mut tape, &zv, &aug, q, kk, v, heads, AttentionMode::Equal, false).unwrap();
        for w in &got.weights {
            assert!(tape.value(*w).data().iter().all(|&x| x == 1.0 / k as f64));
        }
    }
}

#[test]
fn task_attention_matches_oracle() {
    for seed in 0..INSTANCES {
        let mut r = rng(400 + seed);
        let (n, k) = (r.gen_range(1..8), r.gen_range(1..5));
        let heads = r.gen_range(1..4);
        let dh = r.gen_range(1..4);
        let vals: Vec<Vec<Tensor>> = (0..heads)
            .map(|_| (0..k).map(|_| random_tensor(&mut r, n, dh)).collect())
            .collect();
        let queries: Vec<Tensor> = (0..heads).map(|_| random_tensor(&mut r, 1, dh)).collect();
        let keys: Vec<Tensor> = (0..heads).map(|_| random_tensor(&mut r, dh, k)).collect();

        let mut tape = Tape::new();
        let hv: Vec<Vec<_>> = vals
            .iter()
            .map(|per_view| per_view.iter().map(|v| tape.leaf(v.clone())).collect())
            .collect();
        let qv: Vec<_> = queries.iter().map(|q| tape.leaf(q.clone())).collect();
        let kv: Vec<_> = keys.iter().map(|q| tape.leaf(q.clone())).collect();
        let (out, weights) = task_attention(&mut tape, &hv, &qv, &kv, AttentionMode::Learned, false).unwrap();

        let mut expected = Tensor::zeros(n, heads * dh);
        for h in 0..heads {
            let logits: Vec<f64> = (0..k)
                .map(|i| (0..dh).map(|c| queries[h].get(0, c) * keys[h].get(c, i)).sum::<f64>() / (dh as f64).sqrt())
                .collect();
            let z: f64 = logits.iter().map(|l| l.exp()).sum();
            let w: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
            let got_w = tape.value(weights[h]);
            assert_eq!(got_w.shape(), [1, k]);
            for i in 0..k {
                assert!((got_w.get(0, i) - w[i]).abs() < 1e-12);
            }
            for u in 0..n {
                for c in 0..dh {
                    expected.set(u, h * dh + c, (0..k).map(|i| w[i] * vals[h][i].get(u, c)).sum());
                }
            }
        }
        assert_close(tape.value(out), &expected, 1e-12, "task attention output");
    }
}

fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                num += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

/// Precision and recall at every distinct threshold, highest first.
fn ap_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for t in thresholds {
        let selected: Vec<bool> = scores.iter().zip(labels).filter(|(s, _)| **s >= t).map(|(_, &l)| l).collect();
        let tp = selected.iter().filter(|&&l| l).count() as f64;
        let recall = tp / pos;
        ap += (recall - prev_recall) * tp / selected.len() as f64;
        prev_recall = recall;
    }
    ap
}

fn random_scores(r: &mut ChaCha8Rng, ties: bool) -> (Vec<f64>, Vec<bool>) {
    let n = r.gen_range(2..40);
    let mut labels: Vec<bool> = (0..n).map(|_| r.gen_bool(0.4)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n)
        .map(|_| if ties { r.gen_range(0..4) as f64 / 4.0 } else { r.gen::<f64>() })
        .collect();
    (scores, labels)
}

#[test]
fn auc_and_ap_match_brute_force() {
    for seed in 0..INSTANCES {
        let mut r = rng(500 + seed);
        for ties in [false, true] {
            let (s, l) = random_scores(&mut r, ties);
            let auc = roc_auc(&s, &l).unwrap();
            assert!((auc - auc_oracle(&s, &l)).abs() < 1e-12, "auc seed {seed}");
            let ap = average_precision(&s, &l).unwrap();
            assert!((ap - ap_oracle(&s, &l)).abs() < 1e-12, "ap seed {seed}");
        }
    }
}

#[test]
fn ap_without_ties_is_mean_precision_at_hits() {
    for seed in 0..INSTANCES {
        let mut r = rng(600 + seed);
        let (s, l) = random_scores(&mut r, false);
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
        let mut hits = 0.0;
        let mut sum = 0.0;
        for (rank, &i) in order.iter().enumerate() {
            if l[i] {
                hits += 1.0;
                sum += hits / (rank + 1) as f64;
            }
        }
        let ap = average_precision(&s, &l).unwrap();
        assert!((ap - sum / hits).abs() < 1e-12);
    }
}
