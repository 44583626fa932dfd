//! Command implementations behind the `mtmv` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use mtmv_core::data::{self, SyntheticConfig};
use mtmv_core::graph::{jaccard_agreement, task_correlation, MultiViewGraph};
use mtmv_core::metrics::MetricsReport;
use mtmv_core::model::{AttentionRow, Checkpoint};
use mtmv_core::run_config::RunConfig;
use mtmv_core::training::{
    self, evaluate_with_attention, graph_inputs, run_ablation, AblationRow, EvalOptions, Partition, RunMode,
    Variant,
};
use mtmv_core::CODE_VERSION;

pub const THREADS_ENV: &str = "MTMV_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mtmv_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// 2 for bad input (paths, files, configs, checkpoints), 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use mtmv_core::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(e) => match e {
                E::Io { .. } | E::Parse { .. } | E::Config(_) | E::Checkpoint(_) | E::Graph(_) => 2,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "mtmv", version, about = "Multi-task multi-view graph convolutional networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write its report, history, attention weights and checkpoint.
    Train(Common),
    /// Score a saved checkpoint on the test split without training.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train`. Its run directory's
        /// config.resolved.json is used when --config is not given.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Train the attention ablations and the single-task variant on one split.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated subset of full,nva,nta,equ,single_each_task.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
    },
    /// View agreement and edge/label correlation tables.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Jaccard coefficient above which a node counts as agreeing.
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
    },
    /// Write a correlated stochastic block model dataset.
    Generate {
        /// Generator settings (JSON); defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the generator seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Flags shared by the model commands. Flags override config fields.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Canonical dataset directory.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// multi, single-link, single-cls, nva, nta or equ.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<RunMode>,
    #[arg(long)]
    pub per_view_metrics: bool,
    #[arg(long)]
    pub micro: bool,
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    [
        RunMode::Multi,
        RunMode::SingleLink,
        RunMode::SingleCls,
        RunMode::Nva,
        RunMode::Nta,
        RunMode::Equ,
    ]
    .into_iter()
    .find(|m| m.name() == s)
    .ok_or_else(|| format!("unknown mode `{s}`"))
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(mtmv_core::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serialises");
    s.push('\n');
    s
}

/// Loads the config file (or defaults) and applies the flags.
pub fn resolve(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_json(&read(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.dataset {
        cfg.dataset = Some(d.clone());
        cfg.synthetic = None;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(m) = common.mode {
        cfg.mode = m;
    }
    cfg.per_view_metrics |= common.per_view_metrics;
    cfg.micro |= common.micro;
    cfg.code_version = Some(CODE_VERSION.to_string());
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_graph(cfg: &RunConfig) -> CliResult<MultiViewGraph> {
    match (&cfg.dataset, &cfg.synthetic) {
        (Some(dir), _) => Ok(data::load(dir)?),
        (None, Some(s)) => Ok(data::generate(s)?),
        (None, None) => Err(CliError::Usage(
            "no dataset: pass --dataset or set `dataset` or `synthetic` in the config".into(),
        )),
    }
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cfg
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("no output directory: pass --out or set `out` in the config".into()))?;
    create_dir(&dir)?;
    Ok(dir)
}

fn eval_options(cfg: &RunConfig) -> EvalOptions {
    EvalOptions {
        per_view: cfg.per_view_metrics,
        micro: cfg.micro,
    }
}

pub fn attention_csv(rows: &[AttentionRow]) -> String {
    let mut out = String::from("mechanism,head,view,weight\n");
    for r in rows {
        writeln!(out, "{},{},{},{}", r.mechanism, r.head, r.view, r.weight).expect("write to string");
    }
    out
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = String::from(
        "variant,link_ap,link_auc,accuracy,precision_macro,f1_macro,reconstruction_mse,mean_epoch_seconds,epochs\n",
    );
    for r in rows {
        let link = r.report.link;
        let cls = r.report.classification;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.variant.name(),
            cell(link.map(|l| l.ap)),
            cell(link.map(|l| l.auc)),
            cell(cls.map(|c| c.accuracy)),
            cell(cls.map(|c| c.precision_macro)),
            cell(cls.map(|c| c.f1_macro)),
            cell(r.report.reconstruction_mse),
            r.epoch_seconds,
            r.epochs
        )
        .expect("write to string");
    }
    out
}

fn threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

pub fn train(common: &Common) -> CliResult<PathBuf> {
    let cfg = resolve(common)?;
    let g = load_graph(&cfg)?;
    let dir = out_dir(&cfg)?;
    let tc = cfg.train_config();
    let plan = training::split(&g, &tc)?;
    warn_all(&plan.warnings);
    let out = training::train_with_plan(&plan, &cfg.model_config(), &tc, eval_options(&cfg))?;

    write(&dir, "config.resolved.json", cfg.to_json())?;
    write(&dir, "report.json", json(&out.report))?;
    write(&dir, "history.csv", out.history.to_csv())?;
    write(&dir, "timing.csv", out.history.timing_csv())?;
    write(
        &dir,
        "timing.json",
        json(&serde_json::json!({
            "epoch_time_seconds": out.history.epoch_times(),
            "epochs": out.history.epochs.len(),
        })),
    )?;
    write(&dir, "attention.csv", attention_csv(&out.attention))?;
    write(&dir, "checkpoint", Checkpoint::from_model(&out.model).encode())?;
    println!(
        "trained {} epochs (best {}), wrote {}",
        out.history.epochs.len(),
        out.history.best_epoch,
        dir.display()
    );
    Ok(dir)
}

/// Rebuilds the split from the resolved config and scores the checkpoint on
/// the test partition. Writes into --out when given, otherwise prints the
/// report.
pub fn evaluate(common: &Common, checkpoint: &Path) -> CliResult<MetricsReport> {
    let mut common = common.clone();
    if common.config.is_none() {
        let sibling = checkpoint.parent().unwrap_or(Path::new(".")).join("config.resolved.json");
        common.config = Some(sibling);
    }
    let out = common.out.take();
    let mut cfg = resolve(&common)?;
    cfg.out = out;

    let bytes = fs::read(checkpoint).map_err(|e| io_err(checkpoint, e))?;
    let ckpt = Checkpoint::decode(&bytes)?;
    let tc = cfg.train_config();
    let expected = tc.mode.apply(&cfg.model_config())?;
    if ckpt.config != expected {
        return Err(mtmv_core::Error::Checkpoint(
            "checkpoint was written for a different model configuration".into(),
        )
        .into());
    }
    let g = load_graph(&cfg)?;
    let plan = training::split(&g, &tc)?;
    let inputs = graph_inputs(&plan, &expected, &tc)?;
    let shape = ckpt.shape;
    if shape.nodes != plan.nodes
        || shape.input_views != inputs.num_views()
        || shape.link_outputs != plan.num_views
        || shape.classes != plan.num_classes
    {
        return Err(mtmv_core::Error::Checkpoint(format!(
            "checkpoint expects {} nodes, {} views and {} classes; dataset has {}, {} and {}",
            shape.nodes, shape.link_outputs, shape.classes, plan.nodes, plan.num_views, plan.num_classes
        ))
        .into());
    }
    let model = ckpt.into_model()?;
    let (report, attention) = evaluate_with_attention(&model, &inputs, &plan, Partition::Test, eval_options(&cfg))?;
    match &cfg.out {
        Some(dir) => {
            create_dir(dir)?;
            write(dir, "report.json", json(&report))?;
            write(dir, "attention.csv", attention_csv(&attention))?;
        }
        None => print!("{}", json(&report)),
    }
    Ok(report)
}

pub fn ablate(common: &Common, variants: Option<&[String]>) -> CliResult<Vec<AblationRow>> {
    let mut cfg = resolve(common)?;
    if let Some(names) = variants {
        cfg.variants = names.iter().map(|n| Variant::parse(n.trim())).collect::<Result<_, _>>()?;
    }
    let g = load_graph(&cfg)?;
    let dir = out_dir(&cfg)?;
    let tc = cfg.train_config();
    let plan = training::split(&g, &tc)?;
    warn_all(&plan.warnings);
    let rows = run_ablation(&plan, &cfg.model_config(), &tc, &cfg.variants, threads())?;
    write(&dir, "config.resolved.json", cfg.to_json())?;
    write(&dir, "ablation.csv", ablation_csv(&rows))?;
    println!("{} variants, wrote {}", rows.len(), dir.display());
    Ok(rows)
}

pub fn analyze(common: &Common, threshold: f64) -> CliResult<PathBuf> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::Usage(format!("--threshold must be in [0, 1], got {threshold}")));
    }
    let cfg = resolve(common)?;
    let g = load_graph(&cfg)?;
    let dir = out_dir(&cfg)?;
    let names = g.view_names();
    let mut agreement = String::from("view_a,view_b,agree,disagree,nodes\n");
    for a in 0..g.num_views() {
        for b in a + 1..g.num_views() {
            let r = jaccard_agreement(&g, a, b, threshold)?;
            writeln!(agreement, "{},{},{},{},{}", names[a], names[b], r.agree, r.disagree, r.counted)
                .expect("write to string");
        }
    }
    let mut correlation = String::from("view,correlation\n");
    for (v, name) in names.iter().enumerate() {
        let c = task_correlation(&g, v)?;
        writeln!(correlation, "{},{}", name, c).expect("write to string");
    }
    write(&dir, "agreement.csv", agreement)?;
    write(&dir, "correlation.csv", correlation)?;
    println!("wrote {}", dir.display());
    Ok(dir)
}

pub fn generate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> CliResult<()> {
    let mut cfg: SyntheticConfig = match config {
        Some(p) => serde_json::from_str(&read(p)?).map_err(|e| mtmv_core::Error::Config(e.to_string()))?,
        None => SyntheticConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let g = data::generate(&cfg)?;
    data::save(&g, out)?;
    println!("wrote {} nodes, {} views to {}", g.num_nodes(), g.num_views(), out.display());
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(common) => train(&common).map(drop),
        Command::Evaluate { common, checkpoint } => evaluate(&common, &checkpoint).map(drop),
        Command::Ablate { common, variants } => ablate(&common, variants.as_deref()).map(drop),
        Command::Analyze { common, threshold } => analyze(&common, threshold).map(drop),
        Command::Generate { config, seed, out } => generate(config.as_deref(), seed, &out),
    }
}
