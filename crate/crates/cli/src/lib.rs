//! Command-line driver: builds snapshot timelines, runs online or
//! recalculated embeddings across them and writes metric timelines.

pub mod config;
pub mod eval;
pub mod run;
pub mod snapshot;

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use dynakge::dyninit::PreInitMode;
use dynakge::eval::Distance;
use dynakge::ModelKind;

pub use config::{resolve_seed, ExperimentConfig, RunMode};
pub use eval::{cmd_eval, cmd_init_report, EvalArgs, InitReportArgs};
pub use run::{run_experiment, SnapshotRecord, Timeline};
pub use snapshot::{cmd_snapshot, SnapshotArgs, SnapshotMode};

#[derive(Debug, Parser)]
#[command(
    name = "dynakge",
    version,
    about = "Embeddings for evolving knowledge graphs"
)]
pub struct Cli {
    /// Worker threads for evaluation; defaults to all cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cut a triple file or static graph into a snapshot timeline.
    Snapshot(SnapshotArgs),
    /// Embed every snapshot of a timeline and record metrics.
    Run(Box<RunArgs>),
    /// Evaluate one stored embedding against one snapshot.
    Eval(EvalArgs),
    /// Initialize the new elements of one snapshot and report each step.
    InitReport(InitReportArgs),
}

#[derive(Clone, Debug, clap::Args)]
pub struct RunArgs {
    /// Start from this config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<ModelKind>,
    #[arg(long, value_enum)]
    pub mode: Option<RunMode>,
    /// Same as `--mode recalc`.
    #[arg(long, value_enum, conflicts_with = "mode")]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Offline epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Offline learning rate; unless given explicitly, the online rates
    /// follow as a fifth of it and half of that, and the pre-training rate
    /// equals it.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Batches per epoch, offline and online.
    #[arg(long)]
    pub batches: Option<usize>,
    #[arg(long)]
    pub ge_num: Option<usize>,
    #[arg(long)]
    pub cs_num: Option<usize>,
    #[arg(long)]
    pub ge_lr: Option<f64>,
    #[arg(long)]
    pub cs_lr: Option<f64>,
    /// Pre-training rate of new elements.
    #[arg(long)]
    pub init_lr: Option<f64>,
    #[arg(long)]
    pub cs_restrict: bool,
    #[arg(long)]
    pub pre_init: Option<PreInitMode>,
    /// Random blocks for new elements instead of the initialization.
    #[arg(long)]
    pub no_init: bool,
    /// Disable validation, early stopping and checkpoint backtracking.
    #[arg(long)]
    pub no_validation: bool,
    #[arg(long)]
    pub classification: bool,
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    pub nmc_distance: Option<NmcDistance>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Baseline {
    Recalc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum NmcDistance {
    L1,
    L2,
    Cosine,
}

impl From<NmcDistance> for Distance {
    fn from(d: NmcDistance) -> Self {
        match d {
            NmcDistance::L1 => Distance::L1,
            NmcDistance::L2 => Distance::L2,
            NmcDistance::Cosine => Distance::Cosine,
        }
    }
}

impl RunArgs {
    /// Config file contents (or model defaults) with the flags applied.
    pub fn resolve(&self, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => {
                let (Some(snapshots), Some(out)) = (&self.snapshots, &self.out) else {
                    bail!("run needs --snapshots and --out, or --config");
                };
                ExperimentConfig::for_model(
                    self.model.unwrap_or(ModelKind::TransE),
                    snapshots.clone(),
                    out.clone(),
                )
            }
        };
        if let Some(kind) = self.model {
            if kind != cfg.model.kind {
                let fresh =
                    ExperimentConfig::for_model(kind, cfg.snapshots.clone(), cfg.out.clone());
                cfg.model = fresh.model;
                cfg.train = fresh.train;
                cfg.online = fresh.online;
            }
        }
        if let Some(p) = &self.snapshots {
            cfg.snapshots = p.clone();
        }
        if let Some(p) = &self.out {
            cfg.out = p.clone();
        }
        if let Some(mode) = self.mode {
            cfg.mode = mode;
        }
        if self.baseline.is_some() {
            cfg.mode = RunMode::Recalc;
        }
        if let Some(d) = self.dim {
            cfg.model.entity_dim = d;
            cfg.model.relation_dim = d;
            if cfg.model.kind == ModelKind::Analogy {
                cfg.model.analogy_scalar_dims = d % 2;
            }
        }
        if let Some(n) = self.epochs {
            cfg.train.num_epoch = n;
        }
        if let Some(lr) = self.lr {
            cfg.train.learning_rate = lr;
            cfg.online.ge_lr = lr / 5.0;
            cfg.online.cs_lr = lr / 10.0;
            cfg.online.init.init_lr = lr;
        }
        if let Some(n) = self.batches {
            cfg.train.num_batch = n;
            cfg.online.num_batch = n;
        }
        if let Some(n) = self.ge_num {
            cfg.online.ge_num = n;
        }
        if let Some(n) = self.cs_num {
            cfg.online.cs_num = n;
        }
        if let Some(v) = self.ge_lr {
            cfg.online.ge_lr = v;
        }
        if let Some(v) = self.cs_lr {
            cfg.online.cs_lr = v;
        }
        if let Some(v) = self.init_lr {
            cfg.online.init.init_lr = v;
        }
        if self.cs_restrict {
            cfg.online.cs_restrict = true;
        }
        if let Some(m) = self.pre_init {
            cfg.online.init.pre_init = m;
        }
        if self.no_init {
            cfg.online.initialize = false;
        }
        if self.no_validation {
            cfg.train.validation = false;
            cfg.online.validation = false;
        }
        if self.classification {
            cfg.classification = true;
        }
        if let Some(ks) = &self.ks {
            cfg.ks = ks.clone();
        }
        if let Some(d) = self.nmc_distance {
            cfg.nmc_distance = d.into();
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }
}

/// Runs one parsed command, printing JSON results to stdout.
pub fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Snapshot(args) => {
            let seed = resolve_seed(args.seed)?.unwrap_or(0);
            let meta = cmd_snapshot(args, seed)?;
            println!("{}", serde_json::to_string_pretty(&meta)?);
        }
        Command::Run(args) => {
            let cfg = args.resolve(resolve_seed(args.seed)?)?;
            let timeline = run_experiment(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&timeline.summary)?);
        }
        Command::Eval(args) => {
            let seed = resolve_seed(args.seed)?.unwrap_or(0);
            let out = cmd_eval(args, seed)?;
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::InitReport(args) => {
            let seed = resolve_seed(args.seed)?.unwrap_or(0);
            let report = cmd_init_report(args, seed)?;
            println!("{}", report.to_json()?);
        }
    }
    Ok(())
}
