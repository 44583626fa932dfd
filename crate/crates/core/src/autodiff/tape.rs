use std::sync::Arc;

use rand::Rng as _;

use crate::autodiff::{SparseMatrix, Tensor};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Lower and upper clamp applied before taking logarithms.
pub const LOG_CLAMP: (f64, f64) = (1e-12, 1.0 - 1e-12);

/// Norm offset used by [`Tape::normalize_rows`].
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction target for [`Tape::sum`] and [`Tape::mean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduce {
    /// Reduce everything to `1 x 1`.
    All,
    /// Axis 0 collapses rows (`1 x cols`), axis 1 collapses columns (`rows x 1`).
    Axis(usize),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMM(Arc<SparseMatrix>, Var),
    Tanh(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Hadamard(Var, Var),
    Softmax(Var, usize),
    Sum(Var, Reduce),
    Mean(Var, Reduce),
    Concat(Vec<Var>, usize),
    RowDot(Var, Var),
    Dropout(Var, Vec<f64>),
    LnClamped(Var),
    NormalizeRows(Var),
}

impl Op {
    fn operands(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::SpMM(_, a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Scale(a, _)
            | Op::Softmax(a, _)
            | Op::Sum(a, _)
            | Op::Mean(a, _)
            | Op::Dropout(a, _)
            | Op::LnClamped(a)
            | Op::NormalizeRows(a) => vec![*a],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Hadamard(a, b) | Op::RowDot(a, b) => {
                vec![*a, *b]
            }
            Op::Concat(parts, _) => parts.clone(),
        }
    }
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    op: Op,
}

/// Records a forward pass and replays it backwards.
///
/// Nodes are appended in evaluation order, so the record is already
/// topologically sorted and the backward pass is a single reverse sweep.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    backward_done: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, true, Op::Leaf)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, false, Op::Leaf)
    }

    /// Copies the current value of `x` into a new constant, cutting the
    /// gradient path.
    pub fn detach(&mut self, x: Var) -> Var {
        let value = self.value(x).clone();
        self.constant(value)
    }

    pub fn value(&self, x: Var) -> &Tensor {
        &self.nodes[x.0].value
    }

    pub fn requires_grad(&self, x: Var) -> bool {
        self.nodes[x.0].requires_grad
    }

    /// Accumulated gradient of `x`, available after [`Tape::backward`].
    /// `None` when no path from the loss reached `x`.
    pub fn grad(&self, x: Var) -> Option<&Tensor> {
        self.grads.get(x.0).and_then(Option::as_ref)
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
        self.backward_done = false;
    }

    fn push_raw(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let operands = op.operands();
        let requires_grad = operands.iter().any(|v| self.nodes[v.0].requires_grad);
        if cfg!(debug_assertions) && !value.is_finite() {
            let inputs_finite = operands.iter().all(|v| self.nodes[v.0].value.is_finite());
            assert!(!inputs_finite, "non-finite output from finite inputs in {op:?}");
        }
        self.push_raw(value, requires_grad, op)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::shape(op, sa, sb));
        }
        Ok(())
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.rows(), ta.cols(), data).expect("shapes checked")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Sparse-dense product with a constant sparse operand.
    pub fn spmm(&mut self, s: &Arc<SparseMatrix>, b: Var) -> Result<Var> {
        let value = s.mul_dense(self.value(b))?;
        Ok(self.push(value, Op::SpMM(Arc::clone(s), b)))
    }

    /// Sparse-dense product where the sparse entries would be trainable.
    /// Not supported: adjacency values are always constants.
    pub fn spmm_trainable_values(&mut self, _s: &Arc<SparseMatrix>, _b: Var) -> Result<Var> {
        Err(Error::Unsupported(
            "spmm with trainable sparse entry values".into(),
        ))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_map(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_map(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map(|x| c * x);
        self.push(value, Op::Scale(a, c))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("hadamard", a, b)?;
        let value = self.zip_map(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    /// Softmax along `axis` (1: each row sums to one, 0: each column).
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        check_axis(axis)?;
        let x = self.value(a);
        let mut out = x.clone();
        for_each_slice(x.shape(), axis, |idx| {
            let max = idx.iter().map(|&i| x.data()[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for &i in idx {
                let e = (x.data()[i] - max).exp();
                out.data_mut()[i] = e;
                total += e;
            }
            for &i in idx {
                out.data_mut()[i] /= total;
            }
        });
        Ok(self.push(out, Op::Softmax(a, axis)))
    }

    pub fn sum(&mut self, a: Var, reduce: Reduce) -> Result<Var> {
        let value = reduce_sum(self.value(a), reduce)?;
        Ok(self.push(value, Op::Sum(a, reduce)))
    }

    pub fn mean(&mut self, a: Var, reduce: Reduce) -> Result<Var> {
        let x = self.value(a);
        let count = reduce_count(x.shape(), reduce) as f64;
        let value = reduce_sum(x, reduce)?.map(|v| v / count);
        Ok(self.push(value, Op::Mean(a, reduce)))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        check_axis(axis)?;
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of zero tensors".into()))?;
        let base = self.value(*first).shape();
        let fixed = 1 - axis;
        for p in &parts[1..] {
            let s = self.value(*p).shape();
            if s[fixed] != base[fixed] {
                return Err(Error::shape("concat", base, s));
            }
        }
        let value = if axis == 0 {
            let cols = base[1];
            let mut data = Vec::new();
            for p in parts {
                data.extend_from_slice(self.value(*p).data());
            }
            Tensor::new(data.len() / cols.max(1), cols, data)?
        } else {
            let rows = base[0];
            let total: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(self.value(*p).row(r));
                }
            }
            Tensor::new(rows, total, data)?
        };
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis)))
    }

    /// Per-row inner product, returned as an `n x 1` column.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("row_dot", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let data = (0..ta.rows())
            .map(|r| ta.row(r).iter().zip(tb.row(r)).map(|(x, y)| x * y).sum())
            .collect();
        let value = Tensor::new(ta.rows(), 1, data)?;
        Ok(self.push(value, Op::RowDot(a, b)))
    }

    /// Inverted dropout. In eval mode, or with `rate == 0`, returns `x` itself.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, rng: &mut Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let input = self.value(x);
        let mask: Vec<f64> = (0..input.len())
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let data = input.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(input.rows(), input.cols(), data)?;
        Ok(self.push(value, Op::Dropout(x, mask)))
    }

    /// Natural log after clamping into [`LOG_CLAMP`]; the gradient is zero
    /// where the clamp is active.
    pub fn ln_clamped(&mut self, a: Var) -> Var {
        let (lo, hi) = LOG_CLAMP;
        let value = self.value(a).map(|x| x.clamp(lo, hi).ln());
        self.push(value, Op::LnClamped(a))
    }

    /// Divides each row by its Euclidean norm plus [`NORM_EPS`].
    pub fn normalize_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        let cols = x.cols();
        for r in 0..x.rows() {
            let norm = x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut out.data_mut()[r * cols..(r + 1) * cols] {
                *v /= norm + NORM_EPS;
            }
        }
        self.push(out, Op::NormalizeRows(a))
    }

    /// Populates gradients of every tracked value reachable from `loss`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::Backward(
                "backward already ran on this tape; call zero_grad first".into(),
            ));
        }
        let shape = self.value(loss).shape();
        if shape != [1, 1] {
            return Err(Error::Backward(format!(
                "loss must be a 1x1 scalar, got {shape:?}"
            )));
        }
        self.backward_done = true;
        let mut grads: Vec<Option<Tensor>> = Vec::new();
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            let node = &self.nodes[i];
            propagate(&self.nodes, node, g, lower)?;
        }
        self.grads = grads;
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_axis(axis: usize) -> Result<()> {
    if axis > 1 {
        return Err(Error::InvalidArgument(format!("axis {axis} on a rank-2 tensor")));
    }
    Ok(())
}

/// Calls `f` with the flat indices of every slice along `axis`.
fn for_each_slice(shape: [usize; 2], axis: usize, mut f: impl FnMut(&[usize])) {
    let [rows, cols] = shape;
    let mut idx = Vec::new();
    if axis == 1 {
        for r in 0..rows {
            idx.clear();
            idx.extend(r * cols..(r + 1) * cols);
            f(&idx);
        }
    } else {
        for c in 0..cols {
            idx.clear();
            idx.extend((0..rows).map(|r| r * cols + c));
            f(&idx);
        }
    }
}

fn reduce_count(shape: [usize; 2], reduce: Reduce) -> usize {
    match reduce {
        Reduce::All => shape[0] * shape[1],
        Reduce::Axis(a) => shape[a],
    }
}

fn reduce_sum(x: &Tensor, reduce: Reduce) -> Result<Tensor> {
    let [rows, cols] = x.shape();
    match reduce {
        Reduce::All => Ok(Tensor::scalar(x.sum())),
        Reduce::Axis(0) => {
            let mut out = vec![0.0; cols];
            for r in 0..rows {
                for (o, v) in out.iter_mut().zip(x.row(r)) {
                    *o += v;
                }
            }
            Tensor::new(1, cols, out)
        }
        Reduce::Axis(1) => Tensor::new(rows, 1, (0..rows).map(|r| x.row(r).iter().sum()).collect()),
        Reduce::Axis(a) => Err(Error::InvalidArgument(format!("axis {a} on a rank-2 tensor"))),
    }
}

fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], target: Var, contribution: Tensor) {
    if !nodes[target.0].requires_grad {
        return;
    }
    match &mut grads[target.0] {
        Some(existing) => {
            for (e, c) in existing.data_mut().iter_mut().zip(contribution.data()) {
                *e += c;
            }
        }
        slot @ None => *slot = Some(contribution),
    }
}

/// `g * b^T` without materialising the transpose.
fn matmul_nt(g: &Tensor, b: &Tensor) -> Tensor {
    Tensor::from_fn(g.rows(), b.rows(), |i, k| {
        g.row(i).iter().zip(b.row(k)).map(|(x, y)| x * y).sum::<f64>()
    })
}

/// `a^T * g` without materialising the transpose.
fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, p, n) = (a.rows(), a.cols(), g.cols());
    let mut out = vec![0.0; p * n];
    for i in 0..m {
        let g_row = g.row(i);
        for (k, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, gv) in out[k * n..(k + 1) * n].iter_mut().zip(g_row) {
                *o += av * gv;
            }
        }
    }
    Tensor::new(p, n, out).expect("sized above")
}

fn propagate(nodes: &[Node], node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let val = |v: Var| &nodes[v.0].value;
    let wants = |v: Var| nodes[v.0].requires_grad;
    let y = &node.value;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            if wants(*a) {
                accumulate(grads, nodes, *a, matmul_nt(g, val(*b)));
            }
            if wants(*b) {
                accumulate(grads, nodes, *b, matmul_tn(val(*a), g));
            }
        }
        Op::SpMM(s, b) => {
            accumulate(grads, nodes, *b, s.transpose_mul_dense(g)?);
        }
        Op::Tanh(a) => {
            let d = elementwise(g, y, |gv, yv| gv * (1.0 - yv * yv));
            accumulate(grads, nodes, *a, d);
        }
        Op::Sigmoid(a) => {
            let d = elementwise(g, y, |gv, yv| gv * yv * (1.0 - yv));
            accumulate(grads, nodes, *a, d);
        }
        Op::Add(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, nodes, *a, g.clone());
            accumulate(grads, nodes, *b, g.map(|v| -v));
        }
        Op::Scale(a, c) => accumulate(grads, nodes, *a, g.map(|v| c * v)),
        Op::Hadamard(a, b) => {
            if wants(*a) {
                accumulate(grads, nodes, *a, elementwise(g, val(*b), |x, y| x * y));
            }
            if wants(*b) {
                accumulate(grads, nodes, *b, elementwise(g, val(*a), |x, y| x * y));
            }
        }
        Op::Softmax(a, axis) => {
            let mut d = g.clone();
            for_each_slice(y.shape(), *axis, |idx| {
                let dot: f64 = idx.iter().map(|&i| g.data()[i] * y.data()[i]).sum();
                for &i in idx {
                    d.data_mut()[i] = y.data()[i] * (g.data()[i] - dot);
                }
            });
            accumulate(grads, nodes, *a, d);
        }
        Op::Sum(a, reduce) => {
            accumulate(grads, nodes, *a, broadcast_back(g, val(*a).shape(), *reduce, 1.0));
        }
        Op::Mean(a, reduce) => {
            let shape = val(*a).shape();
            let count = reduce_count(shape, *reduce) as f64;
            accumulate(grads, nodes, *a, broadcast_back(g, shape, *reduce, 1.0 / count));
        }
        Op::Concat(parts, axis) => {
            let mut offset = 0;
            for p in parts {
                let [pr, pc] = val(*p).shape();
                let piece = if *axis == 0 {
                    Tensor::from_fn(pr, pc, |r, c| g.get(offset + r, c))
                } else {
                    Tensor::from_fn(pr, pc, |r, c| g.get(r, offset + c))
                };
                offset += if *axis == 0 { pr } else { pc };
                accumulate(grads, nodes, *p, piece);
            }
        }
        Op::RowDot(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            if wants(*a) {
                accumulate(grads, nodes, *a, Tensor::from_fn(ta.rows(), ta.cols(), |r, c| g.get(r, 0) * tb.get(r, c)));
            }
            if wants(*b) {
                accumulate(grads, nodes, *b, Tensor::from_fn(tb.rows(), tb.cols(), |r, c| g.get(r, 0) * ta.get(r, c)));
            }
        }
        Op::Dropout(a, mask) => {
            let data = g.data().iter().zip(mask).map(|(gv, m)| gv * m).collect();
            accumulate(grads, nodes, *a, Tensor::new(g.rows(), g.cols(), data)?);
        }
        Op::LnClamped(a) => {
            let (lo, hi) = LOG_CLAMP;
            let d = elementwise(g, val(*a), |gv, x| if x > lo && x < hi { gv / x } else { 0.0 });
            accumulate(grads, nodes, *a, d);
        }
        Op::NormalizeRows(a) => {
            let x = val(*a);
            let cols = x.cols();
            let mut d = Tensor::zeros(x.rows(), cols);
            for r in 0..x.rows() {
                let xr = x.row(r);
                let gr = g.row(r);
                let norm = xr.iter().map(|v| v * v).sum::<f64>().sqrt();
                let t = norm + NORM_EPS;
                let xg: f64 = xr.iter().zip(gr).map(|(a, b)| a * b).sum();
                let coef = if norm > 0.0 { xg / (norm * t * t) } else { 0.0 };
                for c in 0..cols {
                    d.data_mut()[r * cols + c] = gr[c] / t - xr[c] * coef;
                }
            }
            accumulate(grads, nodes, *a, d);
        }
    }
    Ok(())
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.rows(), a.cols(), data).expect("same shape")
}

fn broadcast_back(g: &Tensor, shape: [usize; 2], reduce: Reduce, factor: f64) -> Tensor {
    let [rows, cols] = shape;
    match reduce {
        Reduce::All => Tensor::full(rows, cols, g.item() * factor),
        Reduce::Axis(0) => Tensor::from_fn(rows, cols, |_, c| g.get(0, c) * factor),
        _ => Tensor::from_fn(rows, cols, |r, _| g.get(r, 0) * factor),
    }
}
