use std::path::PathBuf;

use anyhow::{bail, Context};
use dynakge::datasets::{
    filter_min_degree, load_triples, planted_graph, sliding_window_snapshots, synthetic_snapshots,
    write_snapshot_dir, PlantedConfig, SnapshotMeta, SplitAssignment, SyntheticConfig,
    TimedTripleLog, TimelineMeta, FB15K_PROPORTIONS, GENERATED_PROPORTIONS,
};
use dynakge::rng::streams;
use dynakge::{derive_rng, Dictionary, Snapshot, TripleSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SnapshotMode {
    /// Overlapping windows over a timestamped triple file.
    Sliding,
    /// Independent random subgraphs of a static graph.
    Synthetic,
}

#[derive(Clone, Debug, clap::Args)]
pub struct SnapshotArgs {
    #[arg(long, value_enum)]
    pub mode: SnapshotMode,
    /// Tab-separated triples. Synthetic mode generates a clustered graph
    /// when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Number of snapshots.
    #[arg(long, default_value_t = 20)]
    pub snapshots: usize,
    /// Window size as a fraction of the log (sliding mode).
    #[arg(long, default_value_t = 0.5)]
    pub window: f64,
    /// Train, valid and test weights; defaults depend on the mode.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub proportions: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.995)]
    pub entity_keep: f64,
    #[arg(long, default_value_t = 0.995)]
    pub relation_keep: f64,
    #[arg(long, default_value_t = 0.95)]
    pub triple_keep: f64,
    /// Iteratively drop entities and relations seen in fewer triples.
    #[arg(long)]
    pub min_degree: Option<usize>,
    #[arg(long, default_value_t = 400)]
    pub planted_entities: usize,
    #[arg(long, default_value_t = 12)]
    pub planted_relations: usize,
    #[arg(long, default_value_t = 50)]
    pub planted_clusters: usize,
    #[arg(long, default_value_t = 5000)]
    pub planted_triples: usize,
    /// Also write `delta_<i>.json` change summaries.
    #[arg(long)]
    pub deltas: bool,
    #[arg(long)]
    pub seed: Option<u64>,
}

fn restrict_log(log: TimedTripleLog, keep: &TripleSet) -> TimedTripleLog {
    TimedTripleLog {
        entries: log
            .entries
            .into_iter()
            .filter(|e| keep.contains(&e.triple))
            .collect(),
        ..log
    }
}

pub fn cmd_snapshot(args: &SnapshotArgs, seed: u64) -> anyhow::Result<TimelineMeta> {
    let proportions = match &args.proportions {
        Some(p) => [p[0], p[1], p[2]],
        None if args.mode == SnapshotMode::Sliding => GENERATED_PROPORTIONS,
        None => FB15K_PROPORTIONS,
    };
    let mut assignment = SplitAssignment::new(proportions)?;
    let mut rng = derive_rng(seed, streams::SNAPSHOT_SAMPLING);
    let load = |path: &PathBuf| -> anyhow::Result<TimedTripleLog> {
        if !path.is_file() {
            bail!("input file {} does not exist", path.display());
        }
        let log = load_triples(path).with_context(|| format!("loading {}", path.display()))?;
        Ok(match args.min_degree {
            Some(k) => {
                let kept = filter_min_degree(&log.triples(), k);
                restrict_log(log, &kept)
            }
            None => log,
        })
    };
    let (snapshots, dict, window, stride, offsets): (Vec<Snapshot>, Dictionary, _, _, _) =
        match args.mode {
            SnapshotMode::Sliding => {
                let Some(input) = &args.input else {
                    bail!("sliding mode needs --input");
                };
                let log = load(input)?;
                let (snaps, layout) = sliding_window_snapshots(
                    &log,
                    args.snapshots,
                    args.window,
                    &mut assignment,
                    &mut rng,
                )?;
                let offsets = layout.offsets.iter().map(|o| Some(*o)).collect();
                (
                    snaps,
                    log.dictionary,
                    Some(layout.window),
                    Some(layout.stride()),
                    offsets,
                )
            }
            SnapshotMode::Synthetic => {
                let (base, dict) = match &args.input {
                    Some(input) => {
                        let log = load(input)?;
                        (log.triples(), log.dictionary)
                    }
                    None => {
                        let cfg = PlantedConfig {
                            entities: args.planted_entities,
                            relations: args.planted_relations,
                            clusters: args.planted_clusters,
                            triples: args.planted_triples,
                        };
                        let (g, dict) = planted_graph(&cfg, &mut rng)?;
                        let g = match args.min_degree {
                            Some(k) => filter_min_degree(&g, k),
                            None => g,
                        };
                        (g, dict)
                    }
                };
                let cfg = SyntheticConfig {
                    snapshots: args.snapshots,
                    entity_keep: args.entity_keep,
                    relation_keep: args.relation_keep,
                    triple_keep: args.triple_keep,
                };
                let snaps = synthetic_snapshots(&base, &cfg, &mut assignment, &mut rng)?;
                let offsets = vec![None; snaps.len()];
                (snaps, dict, None, None, offsets)
            }
        };
    let meta = TimelineMeta {
        mode: match args.mode {
            SnapshotMode::Sliding => "sliding".into(),
            SnapshotMode::Synthetic => "synthetic".into(),
        },
        seed,
        proportions,
        window,
        stride,
        snapshots: snapshots
            .iter()
            .zip(offsets)
            .map(|(s, o)| SnapshotMeta::of(s, o))
            .collect(),
    };
    write_snapshot_dir(&args.out, &snapshots, &dict, &meta, args.deltas)
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(meta)
}
