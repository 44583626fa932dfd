use crate::autodiff::{Reduce, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::model::{ForwardOutput, LinkBatch, Model, TaskKind};

/// Edge batch with its `|pairs| x k` 0/1 view-membership labels.
#[derive(Debug, Clone)]
pub struct LinkTargets {
    pub batch: LinkBatch,
    pub labels: Tensor,
}

impl LinkTargets {
    pub fn new(batch: LinkBatch, labels: Tensor) -> Result<Self> {
        if labels.rows() != batch.len() {
            return Err(Error::InvalidArgument(format!(
                "{} label rows for {} pairs",
                labels.rows(),
                batch.len()
            )));
        }
        Ok(LinkTargets { batch, labels })
    }
}

/// Labeled node subset as a one-hot mask over all nodes.
#[derive(Debug, Clone)]
pub struct ClassTargets {
    pub nodes: Vec<usize>,
    pub classes: Vec<usize>,
    mask: Tensor,
}

impl ClassTargets {
    pub fn new(nodes: Vec<usize>, classes: Vec<usize>, num_nodes: usize, num_classes: usize) -> Result<Self> {
        if nodes.len() != classes.len() {
            return Err(Error::InvalidArgument("node and class lists differ in length".into()));
        }
        let mut mask = Tensor::zeros(num_nodes, num_classes);
        for (&u, &c) in nodes.iter().zip(&classes) {
            if u >= num_nodes || c >= num_classes {
                return Err(Error::InvalidArgument(format!("label ({u}, {c}) out of range")));
            }
            mask.set(u, c, 1.0);
        }
        Ok(ClassTargets { nodes, classes, mask })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Targets<'a> {
    pub link: Option<&'a LinkTargets>,
    pub cls: Option<&'a ClassTargets>,
}

#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub link: Option<Var>,
    pub cls: Option<Var>,
    pub recon: Option<Var>,
}

/// Mean binary cross-entropy over every `(pair, view)` cell.
pub fn link_cross_entropy(tape: &mut Tape, probs: Var, labels: &Tensor) -> Result<Var> {
    let [rows, cols] = tape.value(probs).shape();
    if labels.shape() != [rows, cols] {
        return Err(Error::shape("link_cross_entropy", [rows, cols], labels.shape()));
    }
    if rows * cols == 0 {
        return Err(Error::InvalidArgument("empty link batch".into()));
    }
    let y = tape.constant(labels.clone());
    let not_y = tape.constant(labels.map(|v| 1.0 - v));
    let ones = tape.constant(Tensor::ones(rows, cols));
    let log_p = tape.ln_clamped(probs);
    let q = tape.sub(ones, probs)?;
    let log_q = tape.ln_clamped(q);
    let pos = tape.hadamard(y, log_p)?;
    let neg = tape.hadamard(not_y, log_q)?;
    let both = tape.add(pos, neg)?;
    let total = tape.sum(both, Reduce::All)?;
    Ok(tape.scale(total, -1.0 / (rows * cols) as f64))
}

/// Mean categorical cross-entropy over the labeled nodes in `targets`.
pub fn class_cross_entropy(tape: &mut Tape, probs: Var, targets: &ClassTargets) -> Result<Var> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("empty labeled-node batch".into()));
    }
    if tape.value(probs).shape() != targets.mask.shape() {
        return Err(Error::shape(
            "class_cross_entropy",
            tape.value(probs).shape(),
            targets.mask.shape(),
        ));
    }
    let mask = tape.constant(targets.mask.clone());
    let log_p = tape.ln_clamped(probs);
    let picked = tape.hadamard(mask, log_p)?;
    let total = tape.sum(picked, Reduce::All)?;
    Ok(tape.scale(total, -1.0 / targets.len() as f64))
}

/// `(1/k)(1/N) sum_i ||Z_i - Z~_i||_F^2`.
pub fn reconstruction_mse(tape: &mut Tape, originals: &[Var], decoded: &[Var], stop_gradient: bool) -> Result<Var> {
    if originals.is_empty() || originals.len() != decoded.len() {
        return Err(Error::InvalidArgument(format!(
            "{} views against {} reconstructions",
            originals.len(),
            decoded.len()
        )));
    }
    let k = originals.len();
    let n = tape.value(originals[0]).rows();
    let mut acc: Option<Var> = None;
    for (&z, &zt) in originals.iter().zip(decoded) {
        let target = if stop_gradient { tape.detach(z) } else { z };
        let diff = tape.sub(target, zt)?;
        let sq = tape.hadamard(diff, diff)?;
        let s = tape.sum(sq, Reduce::All)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    Ok(tape.scale(acc.expect("non-empty"), 1.0 / (k * n) as f64))
}

impl Model {
    /// Weighted sum of the active task losses.
    pub fn loss(&self, tape: &mut Tape, out: &ForwardOutput, targets: Targets<'_>) -> Result<LossTerms> {
        let cfg = &self.config;
        let mut link = None;
        let mut cls = None;
        let mut recon = None;
        let mut parts = Vec::new();
        if let Some(p) = out.link_probs {
            let t = targets
                .link
                .ok_or_else(|| Error::InvalidArgument("missing link targets".into()))?;
            let ce = link_cross_entropy(tape, p, &t.labels)?;
            link = Some(ce);
            parts.push(tape.scale(ce, cfg.weight(TaskKind::LinkPrediction)));
        }
        if let Some(p) = out.cls_probs {
            let t = targets
                .cls
                .ok_or_else(|| Error::InvalidArgument("missing classification targets".into()))?;
            let ce = class_cross_entropy(tape, p, t)?;
            cls = Some(ce);
            parts.push(tape.scale(ce, cfg.weight(TaskKind::NodeClassification)));
        }
        if !out.reconstructions.is_empty() {
            let mse = reconstruction_mse(tape, &out.gcn_outputs, &out.reconstructions, cfg.recon_stop_gradient)?;
            recon = Some(mse);
            parts.push(tape.scale(mse, cfg.weight(TaskKind::ViewReconstruction)));
        }
        let mut total = *parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("no active task produced a loss".into()))?;
        for &p in &parts[1..] {
            total = tape.add(total, p)?;
        }
        Ok(LossTerms {
            total,
            link,
            cls,
            recon,
        })
    }
}
