use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use dynakge::datasets::read_snapshot_dir;
use dynakge::dyninit::{initialize_all, InitConfig, InitReport, PreInitMode};
use dynakge::eval::{link_prediction, triple_classification, ClassificationReport, DEFAULT_KS};
use dynakge::models::read_store;
use dynakge::rng::streams;
use dynakge::{
    derive_rng, diff_snapshots, Counters, Dictionary, EmbeddingStore, ModelSpec, Snapshot, Split,
};
use serde::Serialize;

use crate::config::ExperimentConfig;

#[derive(Clone, Debug, clap::Args)]
pub struct EvalArgs {
    /// Store written by `dynakge run`, with its `.json` dictionary alongside.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub snapshots: PathBuf,
    /// Snapshot to evaluate against.
    #[arg(long)]
    pub index: usize,
    #[arg(long, value_enum, default_value = "test")]
    pub split: EvalSplit,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KS)]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub classification: bool,
    /// Model hyper-parameters; defaults follow the store's layout.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalSplit {
    Valid,
    Test,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalOutput {
    pub snapshot: usize,
    pub split: &'static str,
    pub mr: f64,
    pub mrr: f64,
    pub hits: Vec<(usize, f64)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassificationReport>,
}

fn load_pair(
    store: &Path,
    snapshots: &Path,
    index: usize,
) -> anyhow::Result<(EmbeddingStore, Vec<Snapshot>)> {
    let (store, store_dict) =
        read_store(store).with_context(|| format!("reading store {}", store.display()))?;
    let (snaps, dict, _) = read_snapshot_dir(snapshots)
        .with_context(|| format!("reading snapshots from {}", snapshots.display()))?;
    check_dictionary(&store_dict, &dict)?;
    if index >= snaps.len() {
        bail!(
            "snapshot {index} out of range; the timeline has {}",
            snaps.len()
        );
    }
    Ok((store, snaps))
}

/// Ids must mean the same labels in the store and in the timeline.
fn check_dictionary(store: &Dictionary, timeline: &Dictionary) -> anyhow::Result<()> {
    if store != timeline {
        return Err(dynakge::Error::Dictionary(format!(
            "store has {} entities and {} relations, the timeline {} and {}, or their labels differ",
            store.num_entities(),
            store.num_relations(),
            timeline.num_entities(),
            timeline.num_relations()
        ))
        .into());
    }
    Ok(())
}

fn spec_for(store: &EmbeddingStore, config: Option<&Path>) -> anyhow::Result<ModelSpec> {
    let spec = match config {
        Some(path) => ExperimentConfig::load(path)?.model,
        None => ModelSpec::from_layout(store.layout()),
    };
    if spec.layout() != *store.layout() {
        bail!("model configuration does not match the store layout");
    }
    Ok(spec)
}

pub fn cmd_eval(args: &EvalArgs, seed: u64) -> anyhow::Result<EvalOutput> {
    let (store, snaps) = load_pair(&args.store, &args.snapshots, args.index)?;
    let spec = spec_for(&store, args.config.as_deref())?;
    let snap = &snaps[args.index];
    let split = match args.split {
        EvalSplit::Valid => Split::Valid,
        EvalSplit::Test => Split::Test,
    };
    let counters = Counters::new();
    let rep = link_prediction(&spec, &store, snap, snap.split(split), &args.ks, &counters)
        .with_context(|| format!("link prediction on snapshot {}", args.index))?;
    let classification = if args.classification {
        let mut rng = derive_rng(seed, (streams::CLASSIFICATION << 32) + args.index as u64);
        Some(triple_classification(
            &spec, &store, snap, &mut rng, 100, &counters,
        )?)
    } else {
        None
    };
    Ok(EvalOutput {
        snapshot: args.index,
        split: split.name(),
        mr: rep.mr,
        mrr: rep.mrr,
        hits: rep.hits,
        classification,
    })
}

#[derive(Clone, Debug, clap::Args)]
pub struct InitReportArgs {
    /// Store of snapshot `index - 1`.
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub snapshots: PathBuf,
    /// Snapshot whose new elements are initialized.
    #[arg(long)]
    pub index: usize,
    /// Experiment config supplying the model and initialization settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pre_init: Option<PreInitMode>,
    /// Skip pre-training after pre-initialization.
    #[arg(long)]
    pub no_pretrain: bool,
    /// Also write the initialized store here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub fn cmd_init_report(args: &InitReportArgs, seed: u64) -> anyhow::Result<InitReport> {
    if args.index == 0 {
        bail!("snapshot 0 has no predecessor to initialize from");
    }
    let (mut store, snaps) = load_pair(&args.store, &args.snapshots, args.index)?;
    let (spec, mut init) = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            (cfg.model, cfg.online.init)
        }
        None => {
            let spec = ModelSpec::from_layout(store.layout());
            let init = InitConfig::for_model(spec.kind);
            (spec, init)
        }
    };
    if spec.layout() != *store.layout() {
        bail!("model configuration does not match the store layout");
    }
    if let Some(mode) = args.pre_init {
        init.pre_init = mode;
    }
    if args.no_pretrain {
        init.pretrain = false;
    }
    let (prev, next) = (&snaps[args.index - 1], &snaps[args.index]);
    let cs = diff_snapshots(prev, next)?;
    let mut rng = derive_rng(
        seed,
        dynakge::rng::streams::PER_SNAPSHOT + args.index as u64,
    );
    let report = initialize_all(
        &cs,
        next,
        &spec,
        &mut store,
        &init,
        &mut rng,
        &Counters::new(),
    )
    .with_context(|| format!("snapshot {}: initialization", args.index))?;
    if let Some(out) = &args.out {
        let (_, dict) = read_store(&args.store)?;
        dynakge::models::write_store(&store, &dict, out)
            .map_err(|e| anyhow!("writing {}: {e}", out.display()))?;
    }
    Ok(report)
}
