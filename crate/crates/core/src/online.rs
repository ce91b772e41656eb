//! Online updates: carry an embedding from one snapshot to the next by
//! initializing new elements and then mixing change-specific epochs, which
//! only look at added and deleted facts, with general epochs over the whole
//! training set.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::counters::{CounterSet, Counters, Phase, PhaseCounters};
use crate::dyninit::{initialize_all, InitConfig, InitReport};
use crate::error::{Error, Result};
use crate::eval::link_prediction;
use crate::kg::{ChangeSet, Snapshot, Triple};
use crate::models::{
    pair_objective, random_entity_block, random_relation_block, EmbeddingStore, ModelKind,
    ModelSpec, ParamKey, SparseGrad,
};
use crate::rng::KgRng;
use crate::sampling::{sample_corrected, sample_corrupted};
use crate::training::{
    apply_gradients, run_epoch_general, run_schedule, EpochKind, OptimizerKind, OptimizerState,
    TrainConfig, TrainingReport,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OnlineConfig {
    /// General epochs per update.
    #[serde(rename = "geNum")]
    pub ge_num: usize,
    /// Change-specific epochs per update.
    #[serde(rename = "csNum")]
    pub cs_num: usize,
    #[serde(rename = "geLR")]
    pub ge_lr: f64,
    #[serde(rename = "csLR")]
    pub cs_lr: f64,
    /// Skip added facts that involve a new element in change-specific epochs.
    #[serde(rename = "csRestrict")]
    pub cs_restrict: bool,
    /// Run the new-element initialization; when false, missing blocks are
    /// drawn at random.
    pub initialize: bool,
    pub optimizer: OptimizerKind,
    pub num_batch: usize,
    pub valid_steps: usize,
    pub early_stop_patience: usize,
    pub validation: bool,
    pub decay_factor: f64,
    pub decay_threshold: f64,
    pub decay_patience: usize,
    pub max_rejection_attempts: usize,
    #[serde(flatten)]
    pub init: InitConfig,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self::for_model(ModelKind::TransE)
    }
}

impl OnlineConfig {
    /// 180 general and 20 change-specific epochs; the general rate is a
    /// fifth of the offline one and the change-specific rate half of that.
    pub fn for_model(kind: ModelKind) -> Self {
        Self::from_train(&TrainConfig::for_model(kind), kind)
    }

    /// Defaults whose shared settings are taken from an offline config.
    pub fn from_train(train: &TrainConfig, kind: ModelKind) -> Self {
        let ge_lr = train.learning_rate / 5.0;
        Self {
            ge_num: 180,
            cs_num: 20,
            ge_lr,
            cs_lr: ge_lr / 2.0,
            cs_restrict: false,
            initialize: true,
            optimizer: train.optimizer,
            num_batch: train.num_batch,
            valid_steps: train.valid_steps,
            early_stop_patience: train.early_stop_patience,
            validation: train.validation,
            decay_factor: train.decay_factor,
            decay_threshold: train.decay_threshold,
            decay_patience: train.decay_patience,
            max_rejection_attempts: train.max_rejection_attempts,
            init: InitConfig::for_model(kind),
        }
    }

    /// The epoch-loop settings in offline form; `learning_rate` is `geLR`.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            num_epoch: self.ge_num + self.cs_num,
            num_batch: self.num_batch,
            optimizer: self.optimizer,
            learning_rate: self.ge_lr,
            valid_steps: self.valid_steps,
            early_stop_patience: self.early_stop_patience,
            validation: self.validation,
            decay_factor: self.decay_factor,
            decay_threshold: self.decay_threshold,
            decay_patience: self.decay_patience,
            max_rejection_attempts: self.max_rejection_attempts,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ge_lr >= 0.0) || !(self.cs_lr >= 0.0) {
            return Err(Error::Config("geLR and csLR must be non-negative".into()));
        }
        if self.num_batch == 0 || self.valid_steps == 0 {
            return Err(Error::Config(
                "num_batch and valid_steps must be positive".into(),
            ));
        }
        self.init.validate()
    }
}

/// Evenly interleaved schedule with exactly `cs_num` change-specific
/// epochs: entry `i` is change-specific iff `floor((i+1)c/n)` exceeds
/// `floor(ic/n)`.
pub fn uniform_mix(ge_num: usize, cs_num: usize) -> Vec<EpochKind> {
    let n = ge_num + cs_num;
    (0..n)
        .map(|i| {
            if (i + 1) * cs_num / n > i * cs_num / n {
                EpochKind::ChangeSpecific
            } else {
                EpochKind::General
            }
        })
        .collect()
}

/// Pairs of one change-specific epoch: `(corrected, deleted)` for every
/// deleted training fact whose elements survive, then `(added, corrupted)`
/// for every added training fact (without those involving new elements
/// when `restrict` is set).
pub fn change_specific_batch(
    snapshot_next: &Snapshot,
    changeset: &ChangeSet,
    restrict: bool,
    max_attempts: usize,
    rng: &mut KgRng,
) -> Result<Vec<(Triple, Triple)>> {
    let mut batch = Vec::new();
    for del in &changeset.deleted_train {
        if changeset.touches_deleted(del) {
            continue;
        }
        batch.push((sample_corrected(del, snapshot_next, rng)?, *del));
    }
    let sampler = crate::sampling::SamplerConfig {
        seed: 0,
        max_rejection_attempts: max_attempts,
    };
    for add in &changeset.added_train {
        if restrict && changeset.touches_added(add) {
            continue;
        }
        batch.push((*add, sample_corrupted(add, snapshot_next, rng, &sampler)?));
    }
    Ok(batch)
}

/// One change-specific epoch: a single gradient application over the
/// whole [`change_specific_batch`]. Returns the summed loss.
#[allow(clippy::too_many_arguments)]
pub fn run_epoch_change_specific(
    store: &mut EmbeddingStore,
    snapshot_next: &Snapshot,
    changeset: &ChangeSet,
    spec: &ModelSpec,
    cfg: &OnlineConfig,
    opt: &mut OptimizerState,
    lr: f64,
    rng: &mut KgRng,
    counters: &Counters,
) -> Result<f64> {
    let batch = change_specific_batch(
        snapshot_next,
        changeset,
        cfg.cs_restrict,
        cfg.max_rejection_attempts,
        rng,
    )?;
    let mut grad = SparseGrad::new();
    let mut total = 0.0;
    for (pos, neg) in &batch {
        let (loss, g) = pair_objective(spec, store, pos, neg, counters, true)?;
        total += loss;
        grad.merge(g);
    }
    apply_gradients(store, &grad, opt, lr, counters)?;
    Ok(total)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateReport {
    pub schedule: Vec<EpochKind>,
    pub init: Option<InitReport>,
    pub training: TrainingReport,
    /// Work per phase during this update.
    pub counters: BTreeMap<Phase, CounterSet>,
    pub init_seconds: f64,
    pub change_specific_seconds: f64,
    pub general_seconds: f64,
    pub validation_seconds: f64,
}

impl UpdateReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Fills blocks of snapshot elements the store lacks with random draws.
fn fill_missing(
    store: &mut EmbeddingStore,
    snapshot: &Snapshot,
    spec: &ModelSpec,
    rng: &mut KgRng,
) -> Result<()> {
    for r in snapshot.relations() {
        if !store.has_relation(*r) {
            let b = random_relation_block(spec, snapshot.relations().len(), rng);
            store.set_block(ParamKey::Relation(*r), &b)?;
        }
    }
    for e in snapshot.vertices() {
        if !store.has_entity(*e) {
            let b = random_entity_block(spec, snapshot.vertices().len(), rng);
            store.set_block(ParamKey::Entity(*e), &b)?;
        }
    }
    Ok(())
}

/// Updates `store_prev` to `snapshot_next`. Blocks of removed elements are
/// dropped; the store with the best validation score is returned.
pub fn update_online(
    store_prev: &EmbeddingStore,
    snapshot_next: &Snapshot,
    changeset: &ChangeSet,
    spec: &ModelSpec,
    cfg: &OnlineConfig,
    rng: &mut KgRng,
    phases: &PhaseCounters,
) -> Result<(EmbeddingStore, UpdateReport)> {
    cfg.validate()?;
    spec.validate()?;
    let before = phases.snapshot();
    let mut store = store_prev.clone();
    let mut report = UpdateReport {
        schedule: uniform_mix(cfg.ge_num, cfg.cs_num),
        ..Default::default()
    };

    let start = Instant::now();
    if cfg.initialize {
        report.init = Some(initialize_all(
            changeset,
            snapshot_next,
            spec,
            &mut store,
            &cfg.init,
            rng,
            phases.phase(Phase::Init),
        )?);
    }
    fill_missing(&mut store, snapshot_next, spec, rng)?;
    report.init_seconds = start.elapsed().as_secs_f64();
    let stale: Vec<ParamKey> = store
        .entity_ids()
        .filter(|e| !snapshot_next.has_entity(*e))
        .map(ParamKey::Entity)
        .chain(
            store
                .relation_ids()
                .filter(|r| !snapshot_next.has_relation(*r))
                .map(ParamKey::Relation),
        )
        .collect();
    for key in stale {
        store.remove(key);
    }

    let train_cfg = cfg.train_config();
    let valid_counters = phases.phase(Phase::Validation);
    let mut validator = |s: &EmbeddingStore| -> Result<Option<f64>> {
        if snapshot_next.valid.is_empty() {
            return Ok(None);
        }
        let rep = link_prediction(
            spec,
            s,
            snapshot_next,
            &snapshot_next.valid,
            &[10],
            valid_counters,
        )?;
        Ok(rep.hits_at(10))
    };
    let mut opt = OptimizerState::new(cfg.optimizer, store.layout());
    let (mut cs_time, mut ge_time) = (Duration::ZERO, Duration::ZERO);
    if snapshot_next.train.is_empty() && !report.schedule.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let (store, training) = run_schedule(
        store,
        &report.schedule,
        &train_cfg,
        &mut opt,
        &mut validator,
        |kind, store, opt| {
            let t = Instant::now();
            let out = match kind {
                EpochKind::General => {
                    let lr = cfg.ge_lr * opt.lr_scale;
                    let c = phases.phase(Phase::General);
                    run_epoch_general(store, snapshot_next, spec, &train_cfg, opt, lr, rng, c)
                }
                EpochKind::ChangeSpecific => {
                    let lr = cfg.cs_lr * opt.lr_scale;
                    let c = phases.phase(Phase::ChangeSpecific);
                    run_epoch_change_specific(
                        store,
                        snapshot_next,
                        changeset,
                        spec,
                        cfg,
                        opt,
                        lr,
                        rng,
                        c,
                    )
                }
            };
            match kind {
                EpochKind::General => ge_time += t.elapsed(),
                EpochKind::ChangeSpecific => cs_time += t.elapsed(),
            }
            out
        },
    )?;
    report.change_specific_seconds = cs_time.as_secs_f64();
    report.general_seconds = ge_time.as_secs_f64();
    report.validation_seconds = training.validation_seconds;
    report.training = training;
    let after = phases.snapshot();
    report.counters = after
        .into_iter()
        .map(|(p, c)| (p, c - before.get(&p).copied().unwrap_or_default()))
        .collect();
    Ok((store, report))
}
