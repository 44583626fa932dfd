use std::sync::Arc;

use rand::Rng as _;

use crate::autodiff::{SparseMatrix, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph;
use crate::model::{AttentionMode, FeatureMode, Model, TaskKind};
use crate::rng::Rng;

/// Preprocessed adjacencies for the views fed to the model.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub nodes: usize,
    /// `D^-1/2 (A + I) D^-1/2` per view, used by the GCN layers.
    pub normalized: Vec<Arc<SparseMatrix>>,
    /// `A + I` per view, used by the value encoder and the decoder.
    pub augmented: Vec<Arc<SparseMatrix>>,
    /// Node features for [`FeatureMode::Provided`].
    pub features: Option<Tensor>,
}

impl GraphInputs {
    pub fn from_views(views: &[SparseMatrix], binarize: bool) -> Result<Self> {
        let nodes = views
            .first()
            .map(SparseMatrix::rows)
            .ok_or_else(|| Error::Graph("no views".into()))?;
        let mut normalized = Vec::with_capacity(views.len());
        let mut augmented = Vec::with_capacity(views.len());
        for v in views {
            if v.shape() != [nodes, nodes] {
                return Err(Error::Graph("views disagree on node count".into()));
            }
            normalized.push(Arc::new(graph::normalize(v, binarize)?.matrix));
            augmented.push(Arc::new(graph::augment(v, binarize)?));
        }
        Ok(GraphInputs {
            nodes,
            normalized,
            augmented,
            features: None,
        })
    }

    pub fn with_features(mut self, features: Tensor) -> Result<Self> {
        if features.rows() != self.nodes {
            return Err(Error::InvalidArgument(format!(
                "{} feature rows for {} nodes",
                features.rows(),
                self.nodes
            )));
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn num_views(&self) -> usize {
        self.normalized.len()
    }
}

/// Node pairs scored by the link head, with gather matrices for both ends.
#[derive(Debug, Clone)]
pub struct LinkBatch {
    pairs: Vec<(usize, usize)>,
    left: Arc<SparseMatrix>,
    right: Arc<SparseMatrix>,
}

impl LinkBatch {
    pub fn new(pairs: Vec<(usize, usize)>, nodes: usize) -> Result<Self> {
        let us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let vs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        Ok(LinkBatch {
            left: Arc::new(SparseMatrix::row_selector(&us, nodes)?),
            right: Arc::new(SparseMatrix::row_selector(&vs, nodes)?),
            pairs,
        })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Attention weights recorded during a forward pass.
#[derive(Debug, Clone, Default)]
pub struct AttentionWeights {
    /// Per head, an `n x k` matrix of per-node view weights.
    pub view: Vec<Var>,
    /// Per supervised task, per head, a `1 x k` row of view weights.
    pub task: Vec<(TaskKind, Vec<Var>)>,
}

#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub kind: TaskKind,
    /// Task attention output, `None` for the plain GCN baseline.
    pub task_attention: Option<Var>,
    /// Representation fed to the head.
    pub fused: Var,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Tape handles of [`Model::params`], same order.
    pub params: Vec<Var>,
    /// Last GCN layer output per view.
    pub gcn_outputs: Vec<Var>,
    pub view_attention: Option<Var>,
    pub weights: AttentionWeights,
    /// Active supervised tasks.
    pub tasks: Vec<TaskOutput>,
    /// `|pairs| x k` edge-in-view probabilities.
    pub link_probs: Option<Var>,
    /// `n x C` class probabilities.
    pub cls_probs: Option<Var>,
    /// Decoded view representations, one per input view.
    pub reconstructions: Vec<Var>,
}

/// One row of the attention export table.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionRow {
    /// `view`, `task:link` or `task:cls`.
    pub mechanism: String,
    pub head: usize,
    pub view: usize,
    pub weight: f64,
}

impl ForwardOutput {
    pub fn task(&self, kind: TaskKind) -> Option<&TaskOutput> {
        self.tasks.iter().find(|t| t.kind == kind)
    }

    /// Largest deviation from 1 of any view-weight vector: per node and head
    /// for view attention, per task and head for task attention.
    pub fn attention_sum_error(&self, tape: &Tape) -> f64 {
        let mut worst: f64 = 0.0;
        let rows = self.weights.view.iter().chain(self.weights.task.iter().flat_map(|t| &t.1));
        for w in rows {
            let t = tape.value(*w);
            for r in 0..t.rows() {
                worst = worst.max((t.row(r).iter().sum::<f64>() - 1.0).abs());
            }
        }
        worst
    }

    /// View attention averaged over nodes, plus every task attention vector.
    pub fn attention_rows(&self, tape: &Tape) -> Vec<AttentionRow> {
        let mut out = Vec::new();
        for (h, w) in self.weights.view.iter().enumerate() {
            let t = tape.value(*w);
            for view in 0..t.cols() {
                let col: Vec<f64> = (0..t.rows()).map(|r| t.get(r, view)).collect();
                // Constant columns (equal-weight mode) are exported exactly.
                let mean = if col.iter().all(|&v| v == col[0]) {
                    col[0]
                } else {
                    col.iter().sum::<f64>() / col.len() as f64
                };
                out.push(AttentionRow {
                    mechanism: "view".into(),
                    head: h,
                    view,
                    weight: mean,
                });
            }
        }
        for (kind, heads) in &self.weights.task {
            for (h, w) in heads.iter().enumerate() {
                for (view, &weight) in tape.value(*w).data().iter().enumerate() {
                    out.push(AttentionRow {
                        mechanism: format!("task:{}", kind.short_name()),
                        head: h,
                        view,
                        weight,
                    });
                }
            }
        }
        out
    }
}

/// `tanh(Â dropout(Z) W)`.
pub fn gcn_layer(
    tape: &mut Tape,
    norm_adj: &Arc<SparseMatrix>,
    z_prev: Var,
    w: Var,
    dropout: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<Var> {
    let dropped = tape.dropout(z_prev, dropout, training, rng)?;
    let propagated = tape.spmm(norm_adj, dropped)?;
    let pre = tape.matmul(propagated, w)?;
    Ok(tape.tanh(pre))
}

/// First layer on one-hot identity features: `tanh(Â dropout(I) W)`.
///
/// `dropout(I) W` only rescales rows of `W`, so the identity matrix is never
/// built; a row mask is applied to the embedding table instead.
pub fn identity_gcn_layer(
    tape: &mut Tape,
    norm_adj: &Arc<SparseMatrix>,
    w: Var,
    dropout: f64,
    training: bool,
    rng: &mut Rng,
) -> Result<Var> {
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::InvalidArgument(format!("dropout rate {dropout} outside [0, 1)")));
    }
    let input = if training && dropout > 0.0 {
        let [n, d] = tape.value(w).shape();
        let keep = 1.0 / (1.0 - dropout);
        let row_mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < dropout { 0.0 } else { keep })
            .collect();
        let mask = tape.constant(Tensor::from_fn(n, d, |r, _| row_mask[r]));
        tape.hadamard(w, mask)?
    } else {
        w
    };
    let propagated = tape.spmm(norm_adj, input)?;
    Ok(tape.tanh(propagated))
}

/// `d x d_h` matrices picking out each head's column block.
fn head_selectors(tape: &mut Tape, d: usize, heads: usize) -> Vec<Var> {
    let dh = d / heads;
    (0..heads)
        .map(|h| tape.constant(Tensor::from_fn(d, dh, |r, c| f64::from(r == h * dh + c))))
        .collect()
}

/// `sum_i weights[:, i] * values[i]` row by row.
fn blend(tape: &mut Tape, weights: Var, values: &[Var]) -> Result<Var> {
    let k = values.len();
    let dh = tape.value(values[0]).cols();
    let ones_row = tape.constant(Tensor::ones(1, dh));
    let mut acc: Option<Var> = None;
    for (i, &v) in values.iter().enumerate() {
        let unit = tape.constant(Tensor::from_fn(k, 1, |r, _| f64::from(r == i)));
        let column = tape.matmul(weights, unit)?;
        let spread = tape.matmul(column, ones_row)?;
        let term = tape.hadamard(spread, v)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    Ok(acc.expect("at least one view"))
}

/// Result of [`view_attention`].
#[derive(Debug, Clone)]
pub struct ViewAttention {
    pub output: Var,
    /// Per head, `n x k` weights.
    pub weights: Vec<Var>,
    /// Per head, per view, the `n x d_h` value slice. Shared with task attention.
    pub head_values: Vec<Vec<Var>>,
}

/// Per-node attention over views.
///
/// Queries are the mean of `Z_i W_Q`, keys `Z_i W_K`, values
/// `(A_i + I) Z_i W_V`. For each head the logit of view `i` at node `u` is
/// the inner product of the query and key rows scaled by `1/sqrt(d_h)`,
/// softmaxed over views; head outputs are concatenated.
#[allow(clippy::too_many_arguments)]
pub fn view_attention(
    tape: &mut Tape,
    zs: &[Var],
    augmented: &[Arc<SparseMatrix>],
    w_q: Var,
    w_k: Var,
    w_v: Var,
    heads: usize,
    mode: AttentionMode,
    scale_after_softmax: bool,
) -> Result<ViewAttention> {
    let k = zs.len();
    if k == 0 || augmented.len() != k {
        return Err(Error::InvalidArgument(format!(
            "{k} view outputs for {} adjacencies",
            augmented.len()
        )));
    }
    let [n, d] = tape.value(zs[0]).shape();
    if heads == 0 || d % heads != 0 {
        return Err(Error::InvalidArgument(format!(
            "hidden size {d} is not divisible by {heads} heads"
        )));
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let selectors = head_selectors(tape, d, heads);

    let mut queries = Vec::with_capacity(k);
    let mut keys = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for (z, a) in zs.iter().zip(augmented) {
        queries.push(tape.matmul(*z, w_q)?);
        keys.push(tape.matmul(*z, w_k)?);
        let encoded = tape.spmm(a, *z)?;
        values.push(tape.matmul(encoded, w_v)?);
    }
    let mut q_sum = queries[0];
    for &q in &queries[1..] {
        q_sum = tape.add(q_sum, q)?;
    }
    let query = tape.scale(q_sum, 1.0 / k as f64);

    let mut outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    let mut head_values = Vec::with_capacity(heads);
    for sel in selectors {
        let vh = values
            .iter()
            .map(|&v| tape.matmul(v, sel))
            .collect::<Result<Vec<_>>>()?;
        let w = match mode {
            AttentionMode::Equal => tape.constant(Tensor::full(n, k, 1.0 / k as f64)),
            AttentionMode::Learned => {
                let qh = tape.matmul(query, sel)?;
                let mut logits = Vec::with_capacity(k);
                for &key in &keys {
                    let kh = tape.matmul(key, sel)?;
                    let dot = tape.row_dot(qh, kh)?;
                    logits.push(if scale_after_softmax { dot } else { tape.scale(dot, scale) });
                }
                let stacked = tape.concat(&logits, 1)?;
                tape.softmax(stacked, 1)?
            }
        };
        let mut out = blend(tape, w, &vh)?;
        if scale_after_softmax && mode == AttentionMode::Learned {
            out = tape.scale(out, scale);
        }
        outputs.push(out);
        weights.push(w);
        head_values.push(vh);
    }
    let output = tape.concat(&outputs, 1)?;
    Ok(ViewAttention {
        output,
        weights,
        head_values,
    })
}

/// Node-independent attention over views for one task.
///
/// Each head has a learned `1 x d_h` query and `d_h x k` key matrix; their
/// product scaled by `1/sqrt(d_h)` and softmaxed gives one weight per view,
/// applied to the shared value slices. Returns the output and per-head weights.
pub fn task_attention(
    tape: &mut Tape,
    head_values: &[Vec<Var>],
    queries: &[Var],
    keys: &[Var],
    mode: AttentionMode,
    scale_after_softmax: bool,
) -> Result<(Var, Vec<Var>)> {
    let heads = head_values.len();
    if mode == AttentionMode::Learned && (queries.len() != heads || keys.len() != heads) {
        return Err(Error::InvalidArgument(format!(
            "{} queries / {} keys for {heads} heads",
            queries.len(),
            keys.len()
        )));
    }
    let k = head_values[0].len();
    let [n, dh] = tape.value(head_values[0][0]).shape();
    let scale = 1.0 / (dh as f64).sqrt();
    let ones_col = tape.constant(Tensor::ones(n, 1));
    let mut outputs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for (h, vh) in head_values.iter().enumerate() {
        let w = match mode {
            AttentionMode::Equal => tape.constant(Tensor::full(1, k, 1.0 / k as f64)),
            AttentionMode::Learned => {
                let raw = tape.matmul(queries[h], keys[h])?;
                let logits = if scale_after_softmax { raw } else { tape.scale(raw, scale) };
                tape.softmax(logits, 1)?
            }
        };
        let per_node = tape.matmul(ones_col, w)?;
        let mut out = blend(tape, per_node, vh)?;
        if scale_after_softmax && mode == AttentionMode::Learned {
            out = tape.scale(out, scale);
        }
        outputs.push(out);
        weights.push(w);
    }
    Ok((tape.concat(&outputs, 1)?, weights))
}

/// `alpha * z_t + (1 - alpha) * z_v`.
pub fn fuse(tape: &mut Tape, z_v: Var, z_t: Var, alpha: f64) -> Result<Var> {
    let a = tape.scale(z_t, alpha);
    let b = tape.scale(z_v, 1.0 - alpha);
    tape.add(a, b)
}

/// Multi-label edge probabilities.
///
/// Rows of `z` are L2-normalised; the edge feature is the elementwise product
/// of the two endpoint rows (its sum is their cosine similarity), followed by
/// an affine map and a sigmoid per view.
pub fn link_head(tape: &mut Tape, z: Var, batch: &LinkBatch, w: Var, b: Var) -> Result<Var> {
    let unit = tape.normalize_rows(z);
    let left = tape.spmm(&batch.left, unit)?;
    let right = tape.spmm(&batch.right, unit)?;
    let edge = tape.hadamard(left, right)?;
    let logits = affine(tape, edge, w, b)?;
    Ok(tape.sigmoid(logits))
}

/// Row-wise softmax of `z W + b`.
pub fn node_head(tape: &mut Tape, z: Var, w: Var, b: Var) -> Result<Var> {
    let logits = affine(tape, z, w, b)?;
    tape.softmax(logits, 1)
}

/// `x W + 1 b`, broadcasting the bias row with a ones column.
fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let rows = tape.value(x).rows();
    let xw = tape.matmul(x, w)?;
    let ones = tape.constant(Tensor::ones(rows, 1));
    let bias = tape.matmul(ones, b)?;
    tape.add(xw, bias)
}

/// `(A_i + I) Z' W_D^i` for every view.
pub fn reconstruct(
    tape: &mut Tape,
    z_prime: Var,
    augmented: &[Arc<SparseMatrix>],
    decoders: &[Var],
) -> Result<Vec<Var>> {
    if augmented.len() != decoders.len() {
        return Err(Error::InvalidArgument(format!(
            "{} decoders for {} views",
            decoders.len(),
            augmented.len()
        )));
    }
    augmented
        .iter()
        .zip(decoders)
        .map(|(a, &w)| {
            let propagated = tape.spmm(a, z_prime)?;
            tape.matmul(propagated, w)
        })
        .collect()
}

impl Model {
    /// Records the forward pass on `tape`.
    ///
    /// Only tasks with positive weight are evaluated. `link` must be given
    /// when link prediction is active.
    pub fn forward(
        &self,
        tape: &mut Tape,
        inputs: &GraphInputs,
        link: Option<&LinkBatch>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<ForwardOutput> {
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        self.forward_with(tape, params, inputs, link, training, rng)
    }

    /// As [`Model::forward`], with the parameters supplied as tape variables
    /// (in [`Model::names`] order) instead of taken from `self.params`.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        params: Vec<Var>,
        inputs: &GraphInputs,
        link: Option<&LinkBatch>,
        training: bool,
        rng: &mut Rng,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        if params.len() != self.params.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter variables for {} parameters",
                params.len(),
                self.params.len()
            )));
        }
        if inputs.num_views() != self.shape.input_views || inputs.nodes != self.shape.nodes {
            return Err(Error::InvalidArgument(format!(
                "model expects {} views over {} nodes, inputs have {} over {}",
                self.shape.input_views,
                self.shape.nodes,
                inputs.num_views(),
                inputs.nodes
            )));
        }
        let layout = &self.layout;

        let gcn_outputs = self.gcn_trunk(tape, inputs, &params, training, rng)?;

        let mut view_attention_out = None;
        let mut weights = AttentionWeights::default();
        let mut tasks = Vec::new();
        let active: Vec<TaskKind> = cfg.supervised_tasks().filter(|&t| cfg.is_active(t)).collect();

        match &layout.attention {
            None => {
                for kind in active {
                    tasks.push(TaskOutput {
                        kind,
                        task_attention: None,
                        fused: gcn_outputs[0],
                    });
                }
            }
            Some(ids) => {
                let va = view_attention(
                    tape,
                    &gcn_outputs,
                    &inputs.augmented,
                    params[ids.w_q],
                    params[ids.w_k],
                    params[ids.w_v],
                    cfg.heads,
                    cfg.attention,
                    cfg.scale_after_softmax,
                )?;
                for kind in active {
                    let t_ids = layout.task_attention(kind).expect("every supervised task has attention");
                    let q: Vec<Var> = t_ids.query.iter().map(|&i| params[i]).collect();
                    let k: Vec<Var> = t_ids.keys.iter().map(|&i| params[i]).collect();
                    let (z_t, w) = task_attention(
                        tape,
                        &va.head_values,
                        &q,
                        &k,
                        cfg.attention,
                        cfg.scale_after_softmax,
                    )?;
                    let fused = fuse(tape, va.output, z_t, cfg.alpha)?;
                    weights.task.push((kind, w));
                    tasks.push(TaskOutput {
                        kind,
                        task_attention: Some(z_t),
                        fused,
                    });
                }
                weights.view = va.weights;
                view_attention_out = Some(va.output);
            }
        }

        let mut link_probs = None;
        let mut cls_probs = None;
        for t in &tasks {
            match t.kind {
                TaskKind::LinkPrediction => {
                    let batch = link.ok_or_else(|| {
                        Error::InvalidArgument("link prediction is active but no pairs were given".into())
                    })?;
                    let (w, b) = layout.link_head.expect("link head");
                    link_probs = Some(link_head(tape, t.fused, batch, params[w], params[b])?);
                }
                TaskKind::NodeClassification => {
                    let (w, b) = layout.cls_head.expect("cls head");
                    cls_probs = Some(node_head(tape, t.fused, params[w], params[b])?);
                }
                TaskKind::ViewReconstruction => unreachable!(),
            }
        }

        let mut reconstructions = Vec::new();
        if cfg.is_active(TaskKind::ViewReconstruction) {
            let mut z_prime = tasks[0].fused;
            for t in &tasks[1..] {
                z_prime = tape.add(z_prime, t.fused)?;
            }
            let decoders: Vec<Var> = layout.decoders.iter().map(|&i| params[i]).collect();
            reconstructions = reconstruct(tape, z_prime, &inputs.augmented, &decoders)?;
        }

        Ok(ForwardOutput {
            params,
            gcn_outputs,
            view_attention: view_attention_out,
            weights,
            tasks,
            link_probs,
            cls_probs,
            reconstructions,
        })
    }

    /// Shared-weight GCN stack applied to every view.
    pub fn gcn_trunk(
        &self,
        tape: &mut Tape,
        inputs: &GraphInputs,
        params: &[Var],
        training: bool,
        rng: &mut Rng,
    ) -> Result<Vec<Var>> {
        let cfg = &self.config;
        let gcn = &self.layout.gcn;
        let features = match cfg.feature_mode {
            FeatureMode::Identity => None,
            FeatureMode::Provided => {
                let f = inputs.features.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("provided-feature model needs input features".into())
                })?;
                Some(tape.constant(f.clone()))
            }
        };
        let mut outputs = Vec::with_capacity(inputs.num_views());
        for adj in &inputs.normalized {
            let mut z = match features {
                None => identity_gcn_layer(tape, adj, params[gcn[0]], cfg.dropout, training, rng)?,
                Some(x) => gcn_layer(tape, adj, x, params[gcn[0]], cfg.dropout, training, rng)?,
            };
            for &w in &gcn[1..] {
                z = gcn_layer(tape, adj, z, params[w], cfg.dropout, training, rng)?;
            }
            outputs.push(z);
        }
        Ok(outputs)
    }
}
