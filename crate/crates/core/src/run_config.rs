//! Flat JSON run configuration shared by every command.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::error::{Error, Result};
use crate::model::{AttentionMode, FeatureMode, ModelConfig, TaskKind, TaskSpec};
use crate::training::{RunMode, TrainConfig, Variant};

/// Every field is optional in the file; missing fields take the defaults
/// below. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Canonical dataset directory.
    pub dataset: Option<PathBuf>,
    /// Generate the dataset in memory instead of loading one.
    pub synthetic: Option<SyntheticConfig>,
    pub out: Option<PathBuf>,
    /// Written into resolved configs; ignored on input.
    pub code_version: Option<String>,

    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub alpha: f64,
    pub lambda_link: f64,
    pub lambda_cls: f64,
    pub lambda_recon: f64,
    pub dropout: f64,
    pub attention: AttentionMode,
    pub scale_after_softmax: bool,
    pub recon_stop_gradient: bool,
    pub binarize_adjacency: bool,

    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub early_stopping: bool,
    pub seed: u64,
    pub link_train_fraction: f64,
    pub label_train_fraction: f64,
    pub mode: RunMode,
    pub batch_edges: Option<usize>,
    pub sample_nonedges: bool,

    pub per_view_metrics: bool,
    pub micro: bool,
    pub variants: Vec<Variant>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        RunConfig {
            dataset: None,
            synthetic: None,
            out: None,
            code_version: None,
            layers: m.layers,
            hidden: m.hidden,
            heads: m.heads,
            alpha: m.alpha,
            lambda_link: m.weight(TaskKind::LinkPrediction),
            lambda_cls: m.weight(TaskKind::NodeClassification),
            lambda_recon: m.weight(TaskKind::ViewReconstruction),
            dropout: m.dropout,
            attention: m.attention,
            scale_after_softmax: m.scale_after_softmax,
            recon_stop_gradient: m.recon_stop_gradient,
            binarize_adjacency: m.binarize_adjacency,
            learning_rate: t.learning_rate,
            max_epochs: t.max_epochs,
            patience: t.patience,
            early_stopping: t.early_stopping,
            seed: t.seed,
            link_train_fraction: t.link_train_fraction,
            label_train_fraction: t.label_train_fraction,
            mode: t.mode,
            batch_edges: t.batch_edges,
            sample_nonedges: t.sample_nonedges,
            per_view_metrics: false,
            micro: false,
            variants: vec![Variant::Full, Variant::Nva, Variant::Nta, Variant::Equ, Variant::SingleEachTask],
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialises");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.is_some() && self.synthetic.is_some() {
            return Err(Error::Config("`dataset` and `synthetic` are mutually exclusive".into()));
        }
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        if self.variants.is_empty() {
            return Err(Error::Config("`variants` is empty".into()));
        }
        self.model_config().validate()?;
        self.train_config().validate()
    }

    /// Tasks are listed link, classification, reconstruction; a task with
    /// weight 0 keeps its parameters but is never evaluated.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            layers: self.layers,
            hidden: self.hidden,
            heads: self.heads,
            alpha: self.alpha,
            tasks: vec![
                TaskSpec {
                    kind: TaskKind::LinkPrediction,
                    weight: self.lambda_link,
                },
                TaskSpec {
                    kind: TaskKind::NodeClassification,
                    weight: self.lambda_cls,
                },
                TaskSpec {
                    kind: TaskKind::ViewReconstruction,
                    weight: self.lambda_recon,
                },
            ],
            feature_mode: FeatureMode::Identity,
            dropout: self.dropout,
            attention: self.attention,
            scale_after_softmax: self.scale_after_softmax,
            recon_stop_gradient: self.recon_stop_gradient,
            binarize_adjacency: self.binarize_adjacency,
            plain_gcn: false,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            max_epochs: self.max_epochs,
            patience: self.patience,
            early_stopping: self.early_stopping,
            seed: self.seed,
            link_train_fraction: self.link_train_fraction,
            label_train_fraction: self.label_train_fraction,
            mode: self.mode,
            batch_edges: self.batch_edges,
            sample_nonedges: self.sample_nonedges,
            view_subset: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::from_json(r#"{"learning_rte": 0.1}"#).unwrap_err();
        assert!(err.to_string().contains("learning_rte"));
    }

    #[test]
    fn round_trips() {
        let cfg = RunConfig {
            seed: 7,
            mode: RunMode::Nta,
            batch_edges: Some(10),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"hidden": 30, "heads": 4}"#).is_err());
        assert!(RunConfig::from_json(r#"{"link_train_fraction": 1.0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"dataset": "d", "synthetic": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"synthetic": {"p_in": 0.01, "p_out": 0.1}}"#).is_err());
    }
}
