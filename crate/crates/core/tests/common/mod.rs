#![allow(dead_code)]

use std::sync::Arc;

use mtmv_core::autodiff::{SparseMatrix, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Random symmetric adjacency without self-loops.
pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize, p: f64) -> SparseMatrix {
    let mut trips = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                let w = rng.gen_range(0.5..2.0);
                trips.push((u, v, w));
                trips.push((v, u, w));
            }
        }
    }
    SparseMatrix::from_triplets(n, n, trips).unwrap()
}

pub fn random_sparse(rng: &mut ChaCha8Rng, rows: usize, cols: usize, p: f64) -> Arc<SparseMatrix> {
    let mut trips = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.gen_bool(p) {
                trips.push((r, c, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    Arc::new(SparseMatrix::from_triplets(rows, cols, trips).unwrap())
}

/// Plain triple-loop product.
pub fn naive_matmul(a: &Tensor, b: &Tensor) -> Tensor {
    Tensor::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
}
