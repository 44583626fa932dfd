use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    LinkPrediction,
    NodeClassification,
    ViewReconstruction,
}

impl TaskKind {
    pub fn is_supervised(self) -> bool {
        !matches!(self, TaskKind::ViewReconstruction)
    }

    /// Short name used in exported tables.
    pub fn short_name(self) -> &'static str {
        match self {
            TaskKind::LinkPrediction => "link",
            TaskKind::NodeClassification => "cls",
            TaskKind::ViewReconstruction => "recon",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Loss weight. A task with weight 0 is not evaluated at all, so its
    /// exclusive parameters receive no gradient.
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// One-hot node identities; the first layer is an embedding table.
    Identity,
    /// Dense node features supplied with the graph inputs.
    Provided,
}

/// How view weights are produced in both attention mechanisms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    Learned,
    /// Every view weighted `1/k`.
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    /// Mix between task attention (`alpha`) and view attention (`1 - alpha`).
    pub alpha: f64,
    pub tasks: Vec<TaskSpec>,
    pub feature_mode: FeatureMode,
    pub dropout: f64,
    pub attention: AttentionMode,
    /// Divide the attention output, rather than the logits, by `sqrt(d_h)`.
    pub scale_after_softmax: bool,
    /// Treat the GCN outputs as constants inside the reconstruction loss.
    pub recon_stop_gradient: bool,
    /// Use unit weights when building `A + I` and its degrees.
    pub binarize_adjacency: bool,
    /// Skip both attention mechanisms and feed the last GCN layer straight
    /// into the task heads. Only valid with a single input view; this is the
    /// single-view GCN baseline.
    pub plain_gcn: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            hidden: 32,
            heads: 4,
            alpha: 0.5,
            tasks: vec![
                TaskSpec {
                    kind: TaskKind::LinkPrediction,
                    weight: 1.0,
                },
                TaskSpec {
                    kind: TaskKind::NodeClassification,
                    weight: 0.1,
                },
                TaskSpec {
                    kind: TaskKind::ViewReconstruction,
                    weight: 0.01,
                },
            ],
            feature_mode: FeatureMode::Identity,
            dropout: 0.5,
            attention: AttentionMode::Learned,
            scale_after_softmax: false,
            recon_stop_gradient: false,
            binarize_adjacency: false,
            plain_gcn: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.layers == 0 {
            return bad("layers must be at least 1".into());
        }
        if self.heads == 0 || self.hidden == 0 {
            return bad("hidden size and heads must be positive".into());
        }
        if !self.hidden.is_multiple_of(self.heads) {
            return bad(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            ));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 1]", self.alpha));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        for t in &self.tasks {
            if !t.weight.is_finite() || t.weight < 0.0 {
                return bad(format!("task weight {} must be finite and >= 0", t.weight));
            }
            if self.tasks.iter().filter(|o| o.kind == t.kind).count() > 1 {
                return bad(format!("task {:?} listed twice", t.kind));
            }
        }
        if !self.tasks.iter().any(|t| t.kind.is_supervised()) {
            return bad("at least one supervised task is required".into());
        }
        if self.plain_gcn && self.task(TaskKind::ViewReconstruction).is_some() {
            return bad("the plain GCN baseline has no reconstruction decoder".into());
        }
        Ok(())
    }

    pub fn task(&self, kind: TaskKind) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.kind == kind)
    }

    pub fn task_mut(&mut self, kind: TaskKind) -> Option<&mut TaskSpec> {
        self.tasks.iter_mut().find(|t| t.kind == kind)
    }

    /// Weight of `kind`, 0 when the task is absent.
    pub fn weight(&self, kind: TaskKind) -> f64 {
        self.task(kind).map_or(0.0, |t| t.weight)
    }

    pub fn is_active(&self, kind: TaskKind) -> bool {
        self.weight(kind) > 0.0
    }

    /// Supervised tasks in configuration order; each owns a task-attention
    /// block and a head.
    pub fn supervised_tasks(&self) -> impl Iterator<Item = TaskKind> + '_ {
        self.tasks.iter().map(|t| t.kind).filter(|k| k.is_supervised())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }
}

/// Data-dependent sizes fixed when a model is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub nodes: usize,
    /// Views fed through the GCN trunk.
    pub input_views: usize,
    /// Views predicted by the link head (one output per view).
    pub link_outputs: usize,
    pub classes: usize,
    /// Feature width when `feature_mode` is `provided`.
    pub feature_dim: Option<usize>,
}
