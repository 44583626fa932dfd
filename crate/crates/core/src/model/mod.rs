//! Multi-view GCN with view and task attention, multi-task heads and
//! view reconstruction.
//!
//! Data flow for one forward pass:
//!
//! 1. Each input view runs through the same stack of GCN layers
//!    (`tanh(Â dropout(Z) W)`), giving `Z_1..Z_k`.
//! 2. View attention: queries are the mean of `Z_i W_Q`, keys `Z_i W_K`,
//!    values `Ã_i Z_i W_V`; every node gets its own softmax over views.
//! 3. Task attention: per task, a learned query and key matrix produce one
//!    softmax over views shared by all nodes, applied to the same values.
//! 4. Each task mixes the two, `alpha * Z_t + (1 - alpha) * Z_v`, and feeds
//!    its head. The reconstruction decoder maps the sum of the task
//!    representations back through each view.

mod checkpoint;
mod config;
mod forward;
mod loss;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AttentionMode, FeatureMode, ModelConfig, ModelShape, TaskKind, TaskSpec};
pub use forward::{
    fuse, gcn_layer, identity_gcn_layer, link_head, node_head, reconstruct, task_attention,
    view_attention, AttentionRow, AttentionWeights, ForwardOutput, GraphInputs, LinkBatch,
    TaskOutput, ViewAttention,
};
pub use loss::{
    class_cross_entropy, link_cross_entropy, reconstruction_mse, ClassTargets, LinkTargets,
    LossTerms, Targets,
};

use rand::Rng as _;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Parameter indices for one supervised task's attention block.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskAttentionIds {
    pub kind: TaskKind,
    /// Per head, a `1 x d_h` query.
    pub query: Vec<usize>,
    /// Per head, a `d_h x k` key matrix (stored transposed).
    pub keys: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionIds {
    pub w_q: usize,
    pub w_k: usize,
    pub w_v: usize,
    pub tasks: Vec<TaskAttentionIds>,
}

/// Where each parameter group lives in [`Model::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    /// One weight per layer, shared by every view.
    pub gcn: Vec<usize>,
    pub attention: Option<AttentionIds>,
    /// `(weight, bias)` of the link head.
    pub link_head: Option<(usize, usize)>,
    /// `(weight, bias)` of the classification head.
    pub cls_head: Option<(usize, usize)>,
    /// One decoder per input view.
    pub decoders: Vec<usize>,
}

impl ParamLayout {
    pub fn task_attention(&self, kind: TaskKind) -> Option<&TaskAttentionIds> {
        self.attention
            .as_ref()
            .and_then(|a| a.tasks.iter().find(|t| t.kind == kind))
    }

    /// Parameters used only by task `kind` (its attention block and head, or
    /// the decoders for reconstruction).
    pub fn exclusive_to(&self, kind: TaskKind) -> Vec<usize> {
        let mut ids = Vec::new();
        if let Some(t) = self.task_attention(kind) {
            ids.extend(&t.query);
            ids.extend(&t.keys);
        }
        match kind {
            TaskKind::LinkPrediction => ids.extend(self.link_head.iter().flat_map(|&(w, b)| [w, b])),
            TaskKind::NodeClassification => ids.extend(self.cls_head.iter().flat_map(|&(w, b)| [w, b])),
            TaskKind::ViewReconstruction => ids.extend(&self.decoders),
        }
        ids
    }
}

/// Model configuration plus its trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub shape: ModelShape,
    pub layout: ParamLayout,
    pub names: Vec<String>,
    pub params: Vec<Tensor>,
}

fn glorot(rows: usize, cols: usize, rng: &mut rng::Rng) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-limit..limit))
}

struct Builder<'a> {
    names: Vec<String>,
    params: Vec<Tensor>,
    rng: &'a mut rng::Rng,
}

impl Builder<'_> {
    fn glorot(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let t = glorot(rows, cols, self.rng);
        self.push(name, t)
    }

    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.params.push(t);
        self.params.len() - 1
    }
}

impl Model {
    /// Builds a model with freshly initialised parameters.
    ///
    /// Weights are Glorot-uniform and biases zero, except the link head
    /// weight, which starts at one. Decoders draw from their
    /// own random stream, so adding or removing the reconstruction task does
    /// not change the initial values of anything else.
    pub fn new(config: ModelConfig, shape: ModelShape, seed: u64) -> Result<Self> {
        config.validate()?;
        if shape.input_views == 0 || shape.nodes == 0 {
            return Err(Error::Config("model needs at least one node and one view".into()));
        }
        if config.plain_gcn && shape.input_views != 1 {
            return Err(Error::Config(
                "the plain GCN baseline takes exactly one input view".into(),
            ));
        }
        let input_dim = match config.feature_mode {
            FeatureMode::Identity => shape.nodes,
            FeatureMode::Provided => shape.feature_dim.ok_or_else(|| {
                Error::Config("provided features need a feature dimension".into())
            })?,
        };
        let (d, dh, k) = (config.hidden, config.head_dim(), shape.input_views);

        let mut init_rng = rng::stream(seed, Stream::Init);
        let mut dec_rng = rng::stream(seed, Stream::Decoder);
        let mut b = Builder {
            names: Vec::new(),
            params: Vec::new(),
            rng: &mut init_rng,
        };
        let gcn = (0..config.layers)
            .map(|l| b.glorot(format!("gcn.{l}"), if l == 0 { input_dim } else { d }, d))
            .collect();

        let attention = (!config.plain_gcn).then(|| {
            let w_q = b.glorot("attn.w_q".into(), d, d);
            let w_k = b.glorot("attn.w_k".into(), d, d);
            let w_v = b.glorot("attn.w_v".into(), d, d);
            let tasks = config
                .supervised_tasks()
                .map(|kind| {
                    let mut query = Vec::new();
                    let mut keys = Vec::new();
                    for h in 0..config.heads {
                        let name = kind.short_name();
                        query.push(b.glorot(format!("task_attn.{name}.{h}.query"), 1, dh));
                        // Drawn with the fan of a k x d_h matrix, stored transposed.
                        let kt = glorot(k, dh, b.rng).transpose();
                        keys.push(b.push(format!("task_attn.{name}.{h}.keys"), kt));
                    }
                    TaskAttentionIds { kind, query, keys }
                })
                .collect();
            AttentionIds {
                w_q,
                w_k,
                w_v,
                tasks,
            }
        });

        let mut link_head = None;
        let mut cls_head = None;
        for kind in config.supervised_tasks().collect::<Vec<_>>() {
            match kind {
                TaskKind::LinkPrediction => {
                    // All ones: each view's initial logit is the endpoints' cosine similarity.
                    let w = b.push("head.link.w".into(), Tensor::ones(d, shape.link_outputs));
                    let bias = b.push("head.link.b".into(), Tensor::zeros(1, shape.link_outputs));
                    link_head = Some((w, bias));
                }
                TaskKind::NodeClassification => {
                    if shape.classes == 0 {
                        return Err(Error::Config(
                            "node classification needs at least one class".into(),
                        ));
                    }
                    let w = b.glorot("head.cls.w".into(), d, shape.classes);
                    let bias = b.push("head.cls.b".into(), Tensor::zeros(1, shape.classes));
                    cls_head = Some((w, bias));
                }
                TaskKind::ViewReconstruction => unreachable!(),
            }
        }

        let mut decoders = Vec::new();
        if config.task(TaskKind::ViewReconstruction).is_some() {
            b.rng = &mut dec_rng;
            for i in 0..k {
                decoders.push(b.glorot(format!("decoder.{i}"), d, d));
            }
        }
        let Builder { names, params, .. } = b;

        Ok(Model {
            config,
            shape,
            layout: ParamLayout {
                gcn,
                attention,
                link_head,
                cls_head,
                decoders,
            },
            names,
            params,
        })
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.params[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(k: usize) -> ModelShape {
        ModelShape {
            nodes: 10,
            input_views: k,
            link_outputs: k,
            classes: 2,
            feature_dim: None,
        }
    }

    #[test]
    fn trunk_size_independent_of_views() {
        let cfg = ModelConfig {
            hidden: 8,
            heads: 2,
            ..ModelConfig::default()
        };
        let a = Model::new(cfg.clone(), shape(2), 1).unwrap();
        let b = Model::new(cfg, shape(5), 1).unwrap();
        let trunk = |m: &Model| m.layout.gcn.iter().map(|&i| m.params[i].len()).sum::<usize>();
        assert_eq!(trunk(&a), trunk(&b));
        assert_eq!(a.layout.gcn.len(), 2);
    }

    #[test]
    fn decoders_do_not_shift_other_init() {
        let mut plain = ModelConfig::default();
        plain.tasks.retain(|t| t.kind != TaskKind::ViewReconstruction);
        let with = Model::new(ModelConfig::default(), shape(2), 7).unwrap();
        let without = Model::new(plain, shape(2), 7).unwrap();
        for (name, t) in without.names.iter().zip(&without.params) {
            assert_eq!(with.param(name).unwrap(), t, "{name}");
        }
        assert_eq!(with.layout.decoders.len(), 2);
    }

    #[test]
    fn biases_start_at_zero() {
        let m = Model::new(ModelConfig::default(), shape(2), 3).unwrap();
        assert!(m.param("head.cls.b").unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(m.param("task_attn.link.0.keys").unwrap().shape(), [8, 2]);
    }
}
