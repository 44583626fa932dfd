//! Optimisation, data splits, the epoch loop and ablation runs.

mod ablation;
mod adam;
mod fit;
mod split;

pub use ablation::{run_ablation, single_view_baselines, AblationRow, Variant};
pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use fit::{
    evaluate, evaluate_with_attention, graph_inputs, train, train_with_plan, EpochRecord, EvalOptions, History,
    StepResult, TrainOutcome, Trainer,
};
pub use split::{split, EdgeSet, Partition, SplitPlan};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttentionMode, ModelConfig, TaskKind};

/// Which flavour of the model a run trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Every task with positive weight, jointly.
    Multi,
    SingleLink,
    SingleCls,
    /// No view attention (`alpha = 1`).
    Nva,
    /// No task attention (`alpha = 0`).
    Nta,
    /// Both attention mechanisms fixed at `1/k`.
    Equ,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Multi => "multi",
            RunMode::SingleLink => "single-link",
            RunMode::SingleCls => "single-cls",
            RunMode::Nva => "nva",
            RunMode::Nta => "nta",
            RunMode::Equ => "equ",
        }
    }

    pub fn single(kind: TaskKind) -> Result<Self> {
        match kind {
            TaskKind::LinkPrediction => Ok(RunMode::SingleLink),
            TaskKind::NodeClassification => Ok(RunMode::SingleCls),
            TaskKind::ViewReconstruction => Err(Error::Config(
                "view reconstruction cannot be trained on its own".into(),
            )),
        }
    }

    /// Model configuration this mode trains.
    ///
    /// Single-task modes zero every other weight, including reconstruction;
    /// the other heads are still built but never evaluated.
    pub fn apply(self, cfg: &ModelConfig) -> Result<ModelConfig> {
        let mut out = cfg.clone();
        match self {
            RunMode::Multi => {}
            RunMode::SingleLink | RunMode::SingleCls => {
                let keep = if self == RunMode::SingleLink {
                    TaskKind::LinkPrediction
                } else {
                    TaskKind::NodeClassification
                };
                if !cfg.is_active(keep) {
                    return Err(Error::Config(format!(
                        "mode {} needs task {:?} with positive weight",
                        self.name(),
                        keep
                    )));
                }
                for t in &mut out.tasks {
                    if t.kind != keep {
                        t.weight = 0.0;
                    }
                }
            }
            RunMode::Nva => out.alpha = 1.0,
            RunMode::Nta => out.alpha = 0.0,
            RunMode::Equ => out.attention = AttentionMode::Equal,
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// When off, train for `max_epochs` and keep the final parameters.
    pub early_stopping: bool,
    pub seed: u64,
    pub link_train_fraction: f64,
    pub label_train_fraction: f64,
    pub mode: RunMode,
    /// Train on a random subset of this many link pairs per epoch.
    pub batch_edges: Option<usize>,
    /// Add never-connected pairs, labeled 0 in every view, to each split.
    pub sample_nonedges: bool,
    /// Feed only these input views to the model. Link targets still cover
    /// every view.
    pub view_subset: Option<Vec<usize>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            max_epochs: 200,
            patience: 10,
            early_stopping: true,
            seed: 0,
            link_train_fraction: 0.5,
            label_train_fraction: 0.5,
            mode: RunMode::Multi,
            batch_edges: None,
            sample_nonedges: false,
            view_subset: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |f: f64| f > 0.0 && f < 1.0;
        if !open(self.link_train_fraction) || !open(self.label_train_fraction) {
            return Err(Error::Config(format!(
                "train fractions must lie in (0, 1), got {} and {}",
                self.link_train_fraction, self.label_train_fraction
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.batch_edges == Some(0) {
            return Err(Error::Config("batch_edges must be positive".into()));
        }
        if let Some(views) = &self.view_subset {
            if views.is_empty() {
                return Err(Error::Config("view_subset is empty".into()));
            }
        }
        Ok(())
    }
}
