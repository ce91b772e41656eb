use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use dynakge::datasets::read_snapshot_dir;
use dynakge::eval::{link_prediction, nmc, triple_classification, ElementKind};
use dynakge::models::write_store;
use dynakge::online::update_online;
use dynakge::rng::streams;
use dynakge::training::train_offline;
use dynakge::{
    derive_rng, diff_snapshots, CounterSet, EmbeddingStore, Error, ModelKind, Phase, PhaseCounters,
    Snapshot,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, RunMode};

/// Rows of pairwise distances computed at once for NMC.
const NMC_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub snapshot: usize,
    /// `offline`, `online` or `recalc`.
    pub phase: String,
    pub mr: Option<f64>,
    pub mrr: Option<f64>,
    pub hits: Vec<(usize, Option<f64>)>,
    pub classification_accuracy: Option<f64>,
    pub nmc_entities: Option<f64>,
    pub nmc_relations: Option<f64>,
    /// Training work for this snapshot, evaluation excluded.
    pub score_evals: u64,
    pub grad_steps: u64,
    /// Training or update time, evaluation excluded.
    pub wall_clock_s: f64,
    pub epochs: usize,
    pub counters: BTreeMap<Phase, CounterSet>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub mode: RunMode,
    pub model: ModelKind,
    pub mean_mrr: Option<f64>,
    /// Mean over every snapshot after the first.
    pub mean_nmc_entities: Option<f64>,
    pub mean_nmc_relations: Option<f64>,
    pub total_wall_clock_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub summary: TimelineSummary,
    pub records: Vec<SnapshotRecord>,
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// NMC between consecutive stores, absent when fewer than two elements are
/// shared.
fn movement(
    old: &EmbeddingStore,
    new: &EmbeddingStore,
    kind: ElementKind,
    cfg: &ExperimentConfig,
) -> anyhow::Result<Option<f64>> {
    match nmc(old, new, kind, cfg.nmc_distance, NMC_CHUNK) {
        Ok(v) => Ok(Some(v)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn evaluate(
    cfg: &ExperimentConfig,
    store: &EmbeddingStore,
    snap: &Snapshot,
    index: usize,
    phases: &PhaseCounters,
) -> anyhow::Result<(
    Option<f64>,
    Option<f64>,
    Vec<(usize, Option<f64>)>,
    Option<f64>,
)> {
    let counters = phases.phase(Phase::Evaluation);
    let (mr, mrr, hits) = if snap.test.is_empty() {
        log::warn!("snapshot {index} has no test triples; link prediction skipped");
        (None, None, cfg.ks.iter().map(|k| (*k, None)).collect())
    } else {
        let rep = link_prediction(&cfg.model, store, snap, &snap.test, &cfg.ks, counters)?;
        let hits = rep.hits.iter().map(|(k, v)| (*k, Some(*v))).collect();
        (Some(rep.mr), Some(rep.mrr), hits)
    };
    let accuracy = if cfg.classification && !snap.test.is_empty() {
        let mut rng = derive_rng(cfg.seed, (streams::CLASSIFICATION << 32) + index as u64);
        let rep = triple_classification(
            &cfg.model,
            store,
            snap,
            &mut rng,
            cfg.train.max_rejection_attempts,
            counters,
        )?;
        Some(rep.accuracy)
    } else {
        None
    };
    Ok((mr, mrr, hits, accuracy))
}

/// Seed of the from-scratch training at snapshot `index`.
pub fn recalc_seed(seed: u64, index: usize) -> u64 {
    if index == 0 {
        seed
    } else {
        derive_rng(seed, streams::PER_SNAPSHOT + index as u64).gen()
    }
}

pub fn store_path(out: &Path, index: usize) -> PathBuf {
    out.join("stores").join(format!("{index}.bin"))
}

/// Trains on the first snapshot, then updates or retrains for each later
/// one, writing stores, per-snapshot reports, `metrics.csv`, `timeline.json`
/// and `config.toml` under the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<Timeline> {
    cfg.validate()?;
    let (snaps, dict, _) = read_snapshot_dir(&cfg.snapshots)
        .with_context(|| format!("reading snapshots from {}", cfg.snapshots.display()))?;
    if snaps.is_empty() {
        return Err(anyhow!("{} holds no snapshots", cfg.snapshots.display()));
    }
    fs::create_dir_all(cfg.out.join("stores"))?;
    fs::create_dir_all(cfg.out.join("reports"))?;
    fs::write(cfg.out.join("config.toml"), cfg.to_toml()?)?;

    let mut records = Vec::with_capacity(snaps.len());
    let mut prev: Option<EmbeddingStore> = None;
    for (i, snap) in snaps.iter().enumerate() {
        let phases = PhaseCounters::new();
        let start = Instant::now();
        let (store, phase, epochs, report) = match (&prev, cfg.mode) {
            (Some(prev_store), RunMode::Online) => {
                let cs = diff_snapshots(&snaps[i - 1], snap)?;
                let mut rng = derive_rng(cfg.seed, streams::PER_SNAPSHOT + i as u64);
                let (store, rep) = update_online(
                    prev_store,
                    snap,
                    &cs,
                    &cfg.model,
                    &cfg.online,
                    &mut rng,
                    &phases,
                )
                .with_context(|| format!("snapshot {i}: online update"))?;
                let epochs = rep.training.epochs_run();
                (store, "online", epochs, rep.to_json()?)
            }
            _ => {
                let mut tc = cfg.train.clone();
                tc.seed = recalc_seed(cfg.seed, i);
                let phase = if i == 0 { "offline" } else { "recalc" };
                let (store, rep) = train_offline(snap, &cfg.model, &tc, &phases)
                    .with_context(|| format!("snapshot {i}: {phase} training"))?;
                (
                    store,
                    phase,
                    rep.epochs_run(),
                    serde_json::to_string_pretty(&rep)?,
                )
            }
        };
        let wall_clock_s = start.elapsed().as_secs_f64();

        let (mr, mrr, hits, classification_accuracy) = evaluate(cfg, &store, snap, i, &phases)
            .with_context(|| format!("snapshot {i}: evaluation"))?;
        let (nmc_entities, nmc_relations) = match &prev {
            Some(old) => (
                movement(old, &store, ElementKind::Entities, cfg)?,
                movement(old, &store, ElementKind::Relations, cfg)?,
            ),
            None => (None, None),
        };
        write_store(&store, &dict, &store_path(&cfg.out, i))
            .with_context(|| format!("snapshot {i}: writing store"))?;
        fs::write(cfg.out.join("reports").join(format!("{i}.json")), report)?;

        let work = phases.training_total();
        let record = SnapshotRecord {
            snapshot: i,
            phase: phase.into(),
            mr,
            mrr,
            hits,
            classification_accuracy,
            nmc_entities,
            nmc_relations,
            score_evals: work.score_evaluations,
            grad_steps: work.gradient_steps,
            wall_clock_s,
            epochs,
            counters: phases.snapshot(),
        };
        log::info!(
            "snapshot {i} ({phase}): MRR {:?}, {epochs} epochs, {wall_clock_s:.2}s",
            record.mrr
        );
        records.push(record);
        prev = Some(store);
    }

    let timeline = Timeline {
        summary: TimelineSummary {
            mode: cfg.mode,
            model: cfg.model.kind,
            mean_mrr: mean(records.iter().map(|r| r.mrr)),
            mean_nmc_entities: mean(records.iter().skip(1).map(|r| r.nmc_entities)),
            mean_nmc_relations: mean(records.iter().skip(1).map(|r| r.nmc_relations)),
            total_wall_clock_s: records.iter().map(|r| r.wall_clock_s).sum(),
        },
        records,
    };
    write_metrics_csv(&cfg.out.join("metrics.csv"), &cfg.ks, &timeline.records)?;
    fs::write(
        cfg.out.join("timeline.json"),
        serde_json::to_string_pretty(&timeline)?,
    )?;
    Ok(timeline)
}

pub fn metrics_header(ks: &[usize]) -> Vec<String> {
    let mut h: Vec<String> = ["snapshot", "phase", "MR", "MRR"]
        .map(String::from)
        .to_vec();
    h.extend(ks.iter().map(|k| format!("Hits@{k}")));
    h.extend(
        [
            "classification_accuracy",
            "NMC_entities",
            "NMC_relations",
            "score_evals",
            "grad_steps",
            "wall_clock_s",
        ]
        .map(String::from),
    );
    h
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn write_metrics_csv(
    path: &Path,
    ks: &[usize],
    records: &[SnapshotRecord],
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(metrics_header(ks))?;
    for r in records {
        let mut row = vec![
            r.snapshot.to_string(),
            r.phase.clone(),
            cell(r.mr),
            cell(r.mrr),
        ];
        row.extend(r.hits.iter().map(|(_, v)| cell(*v)));
        row.extend([
            cell(r.classification_accuracy),
            cell(r.nmc_entities),
            cell(r.nmc_relations),
            r.score_evals.to_string(),
            r.grad_steps.to_string(),
            r.wall_clock_s.to_string(),
        ]);
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}
