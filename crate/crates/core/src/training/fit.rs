use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index;

use crate::autodiff::{Tape, Tensor};
use crate::error::{Error, Result};
use crate::graph::MultiViewGraph;
use crate::metrics::{self, MetricsReport, TimeStats};
use crate::model::{
    AttentionRow, ClassTargets, ForwardOutput, GraphInputs, LinkBatch, LinkTargets, Model, ModelConfig, ModelShape,
    TaskKind, Targets,
};
use crate::rng::{self, Rng, Stream};
use crate::training::{adam_step, split, AdamState, Partition, SplitPlan, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub link_loss: Option<f64>,
    pub cls_loss: Option<f64>,
    pub recon_loss: Option<f64>,
    /// Forward, backward and optimiser step; evaluation excluded.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
    /// Largest deviation of any attention weight vector's sum from 1 seen
    /// during training.
    pub max_attention_sum_error: f64,
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl History {
    /// Losses per epoch. Wall-clock time is left out so that identical runs
    /// produce identical files; see [`History::timing_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,link_loss,cls_loss,recon_loss\n");
        for e in &self.epochs {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.epoch,
                e.train_loss,
                e.val_loss,
                opt(e.link_loss),
                opt(e.cls_loss),
                opt(e.recon_loss)
            )
            .expect("write to string");
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,seconds\n");
        for e in &self.epochs {
            writeln!(out, "{},{}", e.epoch, e.seconds).expect("write to string");
        }
        out
    }

    pub fn epoch_times(&self) -> TimeStats {
        TimeStats::from_samples(&self.epochs.iter().map(|e| e.seconds).collect::<Vec<_>>())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    pub per_view: bool,
    pub micro: bool,
}

/// Loss values and gradients from one optimisation step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub total: f64,
    pub link: Option<f64>,
    pub cls: Option<f64>,
    pub recon: Option<f64>,
    /// Gradient per parameter, as computed before the update.
    pub grads: Vec<Option<Tensor>>,
    pub attention_sum_error: f64,
    pub seconds: f64,
}

/// Model, optimiser state and random streams for one training run.
pub struct Trainer<'a> {
    plan: &'a SplitPlan,
    tc: TrainConfig,
    model: Model,
    inputs: GraphInputs,
    adam: AdamState,
    dropout_rng: Rng,
    batch_rng: Rng,
    train_link: Option<LinkTargets>,
    train_cls: Option<ClassTargets>,
    val_link: Option<LinkTargets>,
    val_cls: Option<ClassTargets>,
}

/// Model inputs for a split: the training views (or the configured subset),
/// normalised per `cfg`.
pub fn graph_inputs(plan: &SplitPlan, cfg: &ModelConfig, tc: &TrainConfig) -> Result<GraphInputs> {
    let views: Vec<_> = match &tc.view_subset {
        None => plan.train_views.clone(),
        Some(ids) => ids
            .iter()
            .map(|&i| {
                plan.train_views
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("view {i} out of range in view_subset")))
            })
            .collect::<Result<_>>()?,
    };
    GraphInputs::from_views(&views, cfg.binarize_adjacency)
}

fn eval_rng() -> Rng {
    // Never drawn from: dropout is off outside training.
    rng::stream(0, Stream::Dropout)
}

impl<'a> Trainer<'a> {
    /// Builds the model for `tc.mode` applied to `model_cfg`.
    pub fn new(plan: &'a SplitPlan, model_cfg: &ModelConfig, tc: &TrainConfig) -> Result<Self> {
        tc.validate()?;
        let cfg = tc.mode.apply(model_cfg)?;
        let inputs = graph_inputs(plan, &cfg, tc)?;
        let shape = ModelShape {
            nodes: plan.nodes,
            input_views: inputs.num_views(),
            link_outputs: plan.num_views,
            classes: plan.num_classes,
            feature_dim: None,
        };
        let model = Model::new(cfg, shape, tc.seed)?;
        let link_on = model.config.is_active(TaskKind::LinkPrediction);
        let cls_on = model.config.is_active(TaskKind::NodeClassification);
        let targets = |part: Partition| -> Result<(Option<LinkTargets>, Option<ClassTargets>)> {
            Ok((
                link_on.then(|| plan.link_targets(part)).transpose()?,
                cls_on.then(|| plan.class_targets(part)).transpose()?,
            ))
        };
        let (train_link, train_cls) = targets(Partition::Train)?;
        let (val_link, val_cls) = targets(Partition::Val)?;
        Ok(Trainer {
            plan,
            adam: AdamState::new(&model.params),
            dropout_rng: rng::stream(tc.seed, Stream::Dropout),
            batch_rng: rng::stream(tc.seed, Stream::Batch),
            tc: tc.clone(),
            model,
            inputs,
            train_link,
            train_cls,
            val_link,
            val_cls,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn inputs(&self) -> &GraphInputs {
        &self.inputs
    }

    fn link_batch(&mut self) -> Result<Option<LinkTargets>> {
        let Some(full) = &self.train_link else { return Ok(None) };
        match self.tc.batch_edges {
            Some(b) if b < full.batch.len() => {
                let mut picked = index::sample(&mut self.batch_rng, full.batch.len(), b).into_vec();
                picked.sort_unstable();
                let pairs = picked.iter().map(|&i| full.batch.pairs()[i]).collect();
                let labels = Tensor::from_fn(b, full.labels.cols(), |r, c| full.labels.get(picked[r], c));
                Ok(Some(LinkTargets::new(LinkBatch::new(pairs, self.plan.nodes)?, labels)?))
            }
            _ => Ok(None),
        }
    }

    /// One forward, backward and Adam update on the training split.
    pub fn step(&mut self, epoch: usize) -> Result<StepResult> {
        let start = Instant::now();
        let sampled = self.link_batch()?;
        let link = sampled.as_ref().or(self.train_link.as_ref());
        let mut tape = Tape::new();
        let out = self
            .model
            .forward(&mut tape, &self.inputs, link.map(|t| &t.batch), true, &mut self.dropout_rng)?;
        let terms = self.model.loss(
            &mut tape,
            &out,
            Targets {
                link,
                cls: self.train_cls.as_ref(),
            },
        )?;
        let total = tape.value(terms.total).item();
        if !total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                seed: self.tc.seed,
                loss: total,
            });
        }
        tape.backward(terms.total)?;
        let grads: Vec<Option<&Tensor>> = out.params.iter().map(|&p| tape.grad(p)).collect();
        adam_step(
            &mut self.model.params,
            &grads,
            &mut self.adam,
            self.tc.learning_rate,
            &self.model.names,
        )?;
        let seconds = start.elapsed().as_secs_f64();
        let value = |v: Option<crate::autodiff::Var>| v.map(|v| tape.value(v).item());
        Ok(StepResult {
            total,
            link: value(terms.link),
            cls: value(terms.cls),
            recon: value(terms.recon),
            grads: grads.into_iter().map(|g| g.cloned()).collect(),
            attention_sum_error: out.attention_sum_error(&tape),
            seconds,
        })
    }

    /// Total loss on the validation split with dropout off.
    pub fn validation_loss(&self) -> Result<f64> {
        let mut tape = Tape::new();
        let out = self.model.forward(
            &mut tape,
            &self.inputs,
            self.val_link.as_ref().map(|t| &t.batch),
            false,
            &mut eval_rng(),
        )?;
        let terms = self.model.loss(
            &mut tape,
            &out,
            Targets {
                link: self.val_link.as_ref(),
                cls: self.val_cls.as_ref(),
            },
        )?;
        Ok(tape.value(terms.total).item())
    }

    /// Runs the epoch loop and returns the kept model with its history.
    pub fn fit(mut self) -> Result<(Model, GraphInputs, History)> {
        let mut history = History::default();
        let mut best = f64::INFINITY;
        let mut best_params = self.model.params.clone();
        let mut since_best = 0;
        for epoch in 0..self.tc.max_epochs {
            let step = self.step(epoch)?;
            let val_loss = self.validation_loss()?;
            if !val_loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    seed: self.tc.seed,
                    loss: val_loss,
                });
            }
            history.max_attention_sum_error = history.max_attention_sum_error.max(step.attention_sum_error);
            history.epochs.push(EpochRecord {
                epoch,
                train_loss: step.total,
                val_loss,
                link_loss: step.link,
                cls_loss: step.cls,
                recon_loss: step.recon,
                seconds: step.seconds,
            });
            if val_loss < best {
                best = val_loss;
                best_params.clone_from(&self.model.params);
                history.best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if self.tc.early_stopping && since_best >= self.tc.patience {
                    history.stopped_early = true;
                    break;
                }
            }
        }
        if self.tc.early_stopping {
            self.model.params = best_params;
        } else {
            history.best_epoch = history.epochs.len().saturating_sub(1);
        }
        Ok((self.model, self.inputs, history))
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub inputs: GraphInputs,
    pub history: History,
    /// Test-split metrics, with epoch timing filled in.
    pub report: MetricsReport,
    /// Attention weights of the kept model on the test split.
    pub attention: Vec<AttentionRow>,
}

/// Splits `g`, trains, and evaluates on the test split.
pub fn train(g: &MultiViewGraph, model_cfg: &ModelConfig, tc: &TrainConfig) -> Result<(SplitPlan, TrainOutcome)> {
    let plan = split(g, tc)?;
    let outcome = train_with_plan(&plan, model_cfg, tc, EvalOptions::default())?;
    Ok((plan, outcome))
}

pub fn train_with_plan(
    plan: &SplitPlan,
    model_cfg: &ModelConfig,
    tc: &TrainConfig,
    opts: EvalOptions,
) -> Result<TrainOutcome> {
    let (model, inputs, history) = Trainer::new(plan, model_cfg, tc)?.fit()?;
    let (mut report, attention) = evaluate_with_attention(&model, &inputs, plan, Partition::Test, opts)?;
    report.epoch_time_seconds = history.epoch_times();
    Ok(TrainOutcome {
        model,
        inputs,
        history,
        report,
        attention,
    })
}

/// Metrics of `model` on one partition, dropout off.
pub fn evaluate(
    model: &Model,
    inputs: &GraphInputs,
    plan: &SplitPlan,
    part: Partition,
    opts: EvalOptions,
) -> Result<MetricsReport> {
    evaluate_with_attention(model, inputs, plan, part, opts).map(|r| r.0)
}

/// `None` for a metric that is undefined on this split (for example every
/// cell positive), otherwise the value.
fn defined<T>(r: Result<T>) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// [`evaluate`] plus the attention weights of the evaluation forward pass.
pub fn evaluate_with_attention(
    model: &Model,
    inputs: &GraphInputs,
    plan: &SplitPlan,
    part: Partition,
    opts: EvalOptions,
) -> Result<(MetricsReport, Vec<AttentionRow>)> {
    let cfg = &model.config;
    let link = cfg
        .is_active(TaskKind::LinkPrediction)
        .then(|| plan.link_targets(part))
        .transpose()?;
    let mut tape = Tape::new();
    let out: ForwardOutput = model.forward(&mut tape, inputs, link.as_ref().map(|t| &t.batch), false, &mut eval_rng())?;
    let mut report = MetricsReport::default();

    if let (Some(p), Some(t)) = (out.link_probs, &link) {
        let probs = tape.value(p);
        let labels: Vec<bool> = t.labels.data().iter().map(|&v| v > 0.5).collect();
        report.link = defined(metrics::link_metrics(probs.data(), &labels))?;
        if opts.per_view {
            report.per_view_link = Some(metrics::per_view_link_metrics(probs.data(), &labels, probs.cols()));
        }
    }
    if let Some(p) = out.cls_probs {
        let nodes = plan.nodes_in(part);
        if !nodes.is_empty() {
            let probs = tape.value(p);
            let pred: Vec<usize> = nodes
                .iter()
                .map(|&u| {
                    let row = probs.row(u);
                    (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
                })
                .collect();
            let truth: Vec<usize> = nodes.iter().map(|&u| plan.labels[u].expect("labeled")).collect();
            let scores = metrics::classification_metrics(&pred, &truth, plan.num_classes)?;
            report.classification = Some(if opts.micro { metrics::with_micro(scores) } else { scores });
        }
    }
    if !out.reconstructions.is_empty() {
        let mse = crate::model::reconstruction_mse(&mut tape, &out.gcn_outputs, &out.reconstructions, false)?;
        report.reconstruction_mse = Some(tape.value(mse).item());
    }
    let attention = out.attention_rows(&tape);
    Ok((report, attention))
}
