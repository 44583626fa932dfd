use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::model::{ModelConfig, TaskKind};
use crate::training::{train_with_plan, EvalOptions, RunMode, SplitPlan, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Nva,
    Nta,
    Equ,
    /// Each supervised task trained on its own.
    SingleEachTask,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Nva => "nva",
            Variant::Nta => "nta",
            Variant::Equ => "equ",
            Variant::SingleEachTask => "single_each_task",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        [Variant::Full, Variant::Nva, Variant::Nta, Variant::Equ, Variant::SingleEachTask]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub report: MetricsReport,
    /// Mean wall time per epoch. For single-task rows, the sum over tasks.
    pub epoch_seconds: f64,
    pub epochs: usize,
}

fn run_variant(plan: &SplitPlan, cfg: &ModelConfig, tc: &TrainConfig, variant: Variant) -> Result<AblationRow> {
    let with_mode = |mode| TrainConfig {
        mode,
        ..tc.clone()
    };
    let single = |mode| train_with_plan(plan, cfg, &with_mode(mode), EvalOptions::default());
    let (report, epoch_seconds, epochs) = match variant {
        Variant::SingleEachTask => {
            let mut report = MetricsReport::default();
            let mut seconds = 0.0;
            let mut epochs = 0;
            for kind in cfg.supervised_tasks().filter(|&k| cfg.is_active(k)) {
                let out = single(RunMode::single(kind)?)?;
                seconds += out.report.epoch_time_seconds.mean;
                epochs += out.history.epochs.len();
                match kind {
                    TaskKind::LinkPrediction => report.link = out.report.link,
                    TaskKind::NodeClassification => report.classification = out.report.classification,
                    TaskKind::ViewReconstruction => {}
                }
            }
            (report, seconds, epochs)
        }
        _ => {
            let mode = match variant {
                Variant::Full => RunMode::Multi,
                Variant::Nva => RunMode::Nva,
                Variant::Nta => RunMode::Nta,
                _ => RunMode::Equ,
            };
            let out = single(mode)?;
            let s = out.report.epoch_time_seconds.mean;
            (out.report, s, out.history.epochs.len())
        }
    };
    Ok(AblationRow {
        variant,
        report,
        epoch_seconds,
        epochs,
    })
}

/// Trains every variant on the same split and seed. Up to `threads`
/// variants run at once; rows come back in the order given.
pub fn run_ablation(
    plan: &SplitPlan,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    variants: &[Variant],
    threads: usize,
) -> Result<Vec<AblationRow>> {
    let results: Mutex<Vec<Option<Result<AblationRow>>>> = Mutex::new(variants.iter().map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&v) = variants.get(i) else { break };
        let row = run_variant(plan, cfg, tc, v);
        results.lock().expect("no panics while holding the lock")[i] = Some(row);
    };
    let threads = threads.clamp(1, variants.len().max(1));
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }
    results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every variant ran"))
        .collect()
}

/// One plain GCN per input view, trained on `kind` alone against the
/// targets of the full multi-view split. Returns test reports in view order.
pub fn single_view_baselines(
    plan: &SplitPlan,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    kind: TaskKind,
) -> Result<Vec<MetricsReport>> {
    let mut base = cfg.clone();
    base.plain_gcn = true;
    base.tasks.retain(|t| t.kind.is_supervised());
    (0..plan.num_views)
        .map(|view| {
            let tc = TrainConfig {
                mode: RunMode::single(kind)?,
                view_subset: Some(vec![view]),
                ..tc.clone()
            };
            Ok(train_with_plan(plan, &base, &tc, EvalOptions::default())?.report)
        })
        .collect()
}
