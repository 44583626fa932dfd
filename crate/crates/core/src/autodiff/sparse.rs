use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Compressed sparse row matrix.
///
/// Column indices are strictly increasing within each row, so there are no
/// duplicate entries and row products always sum in ascending column order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates raw CSR arrays.
    pub fn from_csr(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: &str| Err(Error::InvalidArgument(format!("csr: {msg}")));
        if row_offsets.len() != rows + 1 || row_offsets[0] != 0 {
            return bad("row offsets must have rows+1 entries starting at 0");
        }
        if row_offsets[rows] != col_indices.len() || col_indices.len() != values.len() {
            return bad("last row offset must equal nnz");
        }
        for r in 0..rows {
            let (start, end) = (row_offsets[r], row_offsets[r + 1]);
            if start > end {
                return bad("row offsets must be monotone");
            }
            let cols_in_row = &col_indices[start..end];
            if cols_in_row.iter().any(|&c| c >= cols) {
                return bad("column index out of range");
            }
            if cols_in_row.windows(2).any(|w| w[0] >= w[1]) {
                return bad("column indices must be strictly increasing within a row");
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return bad("non-finite entry");
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are rejected.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
        }
        entries.sort_by_key(|e| (e.0, e.1));
        if let Some(w) = entries.windows(2).find(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return Err(Error::InvalidArgument(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut row_offsets = vec![0; rows + 1];
        for &(r, _, _) in &entries {
            row_offsets[r + 1] += 1;
        }
        for r in 0..rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        let col_indices = entries.iter().map(|e| e.1).collect();
        let values = entries.iter().map(|e| e.2).collect();
        Self::from_csr(rows, cols, row_offsets, col_indices, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn empty(rows: usize, cols: usize) -> Self {
        SparseMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored `(col, value)` pairs of one row.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// All stored entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        let range = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[range.clone()]
            .binary_search(&c)
            .ok()
            .map(|i| self.values[range.start + i])
    }

    pub fn to_dense(&self) -> Tensor {
        let mut t = Tensor::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            t.set(r, c, v);
        }
        t
    }

    /// `self * dense`, summing each output row in ascending column order.
    pub fn mul_dense(&self, dense: &Tensor) -> Result<Tensor> {
        if self.cols != dense.rows() {
            return Err(Error::shape("spmm", self.shape(), dense.shape()));
        }
        let n = dense.cols();
        let mut out = vec![0.0; self.rows * n];
        let src = dense.data();
        for r in 0..self.rows {
            let out_row = &mut out[r * n..(r + 1) * n];
            for (c, v) in self.row(r) {
                for (o, b) in out_row.iter_mut().zip(&src[c * n..(c + 1) * n]) {
                    *o += v * b;
                }
            }
        }
        Tensor::new(self.rows, n, out)
    }

    /// `self^T * dense`, used for the backward pass of `spmm`.
    pub fn transpose_mul_dense(&self, dense: &Tensor) -> Result<Tensor> {
        if self.rows != dense.rows() {
            return Err(Error::shape("spmm^T", self.shape(), dense.shape()));
        }
        let n = dense.cols();
        let mut out = vec![0.0; self.cols * n];
        let src = dense.data();
        for r in 0..self.rows {
            let g_row = &src[r * n..(r + 1) * n];
            for (c, v) in self.row(r) {
                for (o, g) in out[c * n..(c + 1) * n].iter_mut().zip(g_row) {
                    *o += v * g;
                }
            }
        }
        Tensor::new(self.cols, n, out)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && self
                .triplets()
                .all(|(r, c, v)| self.get(c, r).is_some_and(|w| (v - w).abs() <= tol))
    }

    /// Selection matrix with a single 1 in column `indices[i]` of row `i`.
    /// Multiplying by it gathers rows of a dense operand.
    pub fn row_selector(indices: &[usize], cols: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= cols) {
            return Err(Error::InvalidArgument(format!(
                "row index {bad} out of range for {cols} rows"
            )));
        }
        Ok(SparseMatrix {
            rows: indices.len(),
            cols,
            row_offsets: (0..=indices.len()).collect(),
            col_indices: indices.to_vec(),
            values: vec![1.0; indices.len()],
        })
    }
}
