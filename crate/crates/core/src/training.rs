//! Offline training: optimizers, learning-rate decay, the general epoch and
//! the validated epoch loop that online updates reuse.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::counters::{Counters, Phase, PhaseCounters};
use crate::error::{Error, Result};
use crate::eval::link_prediction;
use crate::kg::Snapshot;
use crate::models::{
    init_parameters, pair_objective, EmbeddingStore, Layout, ModelKind, ModelSpec, ParamKey,
    SparseGrad,
};
use crate::rng::{derive_rng, streams, KgRng};
use crate::sampling::{sample_corrupted, SamplerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adagrad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Maximum number of epochs.
    pub num_epoch: usize,
    /// Batches per epoch.
    pub num_batch: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    /// Validate every this many epochs.
    pub valid_steps: usize,
    /// Validations without improvement before stopping.
    pub early_stop_patience: usize,
    /// Disables validation, early stopping and backtracking when false.
    pub validation: bool,
    pub decay_factor: f64,
    /// Relative loss improvement an epoch must reach to count as progress.
    pub decay_threshold: f64,
    /// Epochs without progress before the learning rate decays.
    pub decay_patience: usize,
    pub max_rejection_attempts: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_model(ModelKind::TransE)
    }
}

impl TrainConfig {
    /// SGD at 0.001 for translational models, Adagrad at 0.1 otherwise.
    pub fn for_model(kind: ModelKind) -> Self {
        let (optimizer, learning_rate) = if kind.is_translational() {
            (OptimizerKind::Sgd, 0.001)
        } else {
            (OptimizerKind::Adagrad, 0.1)
        };
        Self {
            num_epoch: 1000,
            num_batch: 100,
            optimizer,
            learning_rate,
            valid_steps: 10,
            early_stop_patience: 10,
            validation: true,
            decay_factor: 0.95,
            decay_threshold: 0.005,
            decay_patience: 20,
            max_rejection_attempts: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_epoch == 0
            || self.num_batch == 0
            || self.valid_steps == 0
            || self.early_stop_patience == 0
        {
            return Err(Error::Config(
                "epoch, batch, validation and patience counts must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(
                "learning rate must be positive and decay factor in (0, 1]".into(),
            ));
        }
        Ok(())
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            seed: self.seed,
            max_rejection_attempts: self.max_rejection_attempts,
        }
    }
}

/// Optimizer state aligned with the store rows, plus the decayed
/// learning-rate scale.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    /// Multiplier applied to every base learning rate.
    pub lr_scale: f64,
    stale_epochs: usize,
    entity_width: usize,
    relation_width: usize,
    entity_accum: Vec<f64>,
    relation_accum: Vec<f64>,
}

const ADAGRAD_EPS: f64 = 1e-8;

impl OptimizerState {
    pub fn new(kind: OptimizerKind, layout: &Layout) -> Self {
        Self {
            kind,
            lr_scale: 1.0,
            stale_epochs: 0,
            entity_width: layout.entity_width(),
            relation_width: layout.relation_width(),
            entity_accum: Vec::new(),
            relation_accum: Vec::new(),
        }
    }

    fn accumulator(&mut self, key: ParamKey) -> &mut [f64] {
        let (acc, w, i) = match key {
            ParamKey::Entity(e) => (&mut self.entity_accum, self.entity_width, e.index()),
            ParamKey::Relation(r) => (&mut self.relation_accum, self.relation_width, r.index()),
        };
        if acc.len() < (i + 1) * w {
            acc.resize((i + 1) * w, 0.0);
        }
        &mut acc[i * w..(i + 1) * w]
    }

    /// Adagrad accumulator of a block, if it was ever touched.
    pub fn accumulated(&self, key: ParamKey) -> Option<&[f64]> {
        let (acc, w, i) = match key {
            ParamKey::Entity(e) => (&self.entity_accum, self.entity_width, e.index()),
            ParamKey::Relation(r) => (&self.relation_accum, self.relation_width, r.index()),
        };
        acc.get(i * w..(i + 1) * w)
    }
}

/// Applies one optimizer step per gradient block in key order. TransH
/// normals are rescaled to unit length afterwards.
pub fn apply_gradients(
    store: &mut EmbeddingStore,
    grad: &SparseGrad,
    opt: &mut OptimizerState,
    lr: f64,
    counters: &Counters,
) -> Result<()> {
    let layout = *store.layout();
    for (key, g) in &grad.blocks {
        let expected = layout.width(*key);
        if g.len() != expected {
            return Err(Error::Shape {
                expected,
                actual: g.len(),
            });
        }
        if !store.has(*key) {
            return Err(match key {
                ParamKey::Entity(e) => Error::MissingEntity(*e),
                ParamKey::Relation(r) => Error::MissingRelation(*r),
            });
        }
        match opt.kind {
            OptimizerKind::Sgd => {
                let block = store.block_mut(*key).expect("present");
                block.iter_mut().zip(g).for_each(|(p, g)| *p -= lr * g);
            }
            OptimizerKind::Adagrad => {
                let acc = opt.accumulator(*key);
                let block = store.block_mut(*key).expect("present");
                for ((p, g), a) in block.iter_mut().zip(g).zip(acc.iter_mut()) {
                    *a += g * g;
                    *p -= lr * g / (*a + ADAGRAD_EPS).sqrt();
                }
            }
        }
        if layout.kind == ModelKind::TransH && matches!(key, ParamKey::Relation(_)) {
            let w = &mut store.block_mut(*key).expect("present")[layout.entity_dim..];
            let n = crate::linalg::norm2(w);
            if n > 0.0 {
                w.iter_mut().for_each(|x| *x /= n);
            }
        }
        counters.add_gradient_steps(1);
    }
    Ok(())
}

/// Feeds the latest epoch loss to the decay rule. The rate shrinks by
/// `decay_factor` once `decay_patience` consecutive epochs fail to improve
/// on their predecessor by `decay_threshold`; the count then restarts.
pub fn maybe_decay_lr(opt: &mut OptimizerState, history: &[f64], cfg: &TrainConfig) -> bool {
    let [.., prev, last] = history else {
        return false;
    };
    if *last <= (1.0 - cfg.decay_threshold) * prev {
        opt.stale_epochs = 0;
        return false;
    }
    opt.stale_epochs += 1;
    if opt.stale_epochs >= cfg.decay_patience {
        opt.stale_epochs = 0;
        opt.lr_scale *= cfg.decay_factor;
        return true;
    }
    false
}

/// Batch boundaries: `num_batch` contiguous slices of equal size, the
/// remainder going to the last one.
pub fn batch_ranges(n: usize, num_batch: usize) -> Vec<std::ops::Range<usize>> {
    if n == 0 {
        return Vec::new();
    }
    let nb = num_batch.clamp(1, n);
    let size = n / nb;
    (0..nb)
        .map(|b| b * size..if b + 1 == nb { n } else { (b + 1) * size })
        .collect()
}

/// One pass over the shuffled training set with one corrupted negative per
/// fact and one gradient application per batch. Returns the summed loss.
#[allow(clippy::too_many_arguments)]
pub fn run_epoch_general(
    store: &mut EmbeddingStore,
    snapshot: &Snapshot,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    lr: f64,
    rng: &mut KgRng,
    counters: &Counters,
) -> Result<f64> {
    if snapshot.train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let sampler = cfg.sampler();
    let mut order = snapshot.train.as_slice().to_vec();
    order.shuffle(rng);
    let mut total = 0.0;
    for range in batch_ranges(order.len(), cfg.num_batch) {
        let mut grad = SparseGrad::new();
        for pos in &order[range] {
            let neg = sample_corrupted(pos, snapshot, rng, &sampler)?;
            let (loss, g) = pair_objective(spec, store, pos, &neg, counters, true)?;
            total += loss;
            grad.merge(g);
        }
        apply_gradients(store, &grad, opt, lr, counters)?;
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpochKind {
    General,
    ChangeSpecific,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_kinds: Vec<EpochKind>,
    pub epoch_losses: Vec<f64>,
    /// `(epoch, filtered Hits@10)` for every validation, epochs counted from 1.
    pub validations: Vec<(usize, f64)>,
    /// Epoch of the checkpoint that was returned, if any.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// Epochs after which the learning rate decayed.
    pub decay_epochs: Vec<usize>,
    pub final_lr_scale: f64,
    pub train_seconds: f64,
    pub validation_seconds: f64,
}

impl TrainingReport {
    pub fn epochs_run(&self) -> usize {
        self.epoch_losses.len()
    }
}

/// Validation callback: filtered Hits@10 of a candidate store, or `None`
/// when there is nothing to validate on.
pub type Validator<'a> = dyn FnMut(&EmbeddingStore) -> Result<Option<f64>> + 'a;

/// Runs a schedule of epochs with learning-rate decay on general-epoch
/// losses, periodic validation, early stopping and backtracking to the
/// best validated checkpoint.
pub(crate) fn run_schedule(
    mut store: EmbeddingStore,
    schedule: &[EpochKind],
    cfg: &TrainConfig,
    opt: &mut OptimizerState,
    validator: &mut Validator<'_>,
    mut epoch: impl FnMut(EpochKind, &mut EmbeddingStore, &mut OptimizerState) -> Result<f64>,
) -> Result<(EmbeddingStore, TrainingReport)> {
    let mut report = TrainingReport::default();
    let mut general_losses = Vec::new();
    let mut best: Option<(f64, EmbeddingStore)> = None;
    let mut patience = 0;
    let mut train_time = std::time::Duration::ZERO;
    let mut valid_time = std::time::Duration::ZERO;
    for (i, kind) in schedule.iter().enumerate() {
        let n = i + 1;
        let start = Instant::now();
        let loss = epoch(*kind, &mut store, opt)?;
        report.epoch_kinds.push(*kind);
        report.epoch_losses.push(loss);
        if *kind == EpochKind::General {
            general_losses.push(loss);
            if maybe_decay_lr(opt, &general_losses, cfg) {
                report.decay_epochs.push(n);
            }
        }
        train_time += start.elapsed();
        if cfg.validation && n % cfg.valid_steps == 0 {
            let start = Instant::now();
            let outcome = validator(&store)?;
            valid_time += start.elapsed();
            if let Some(hits) = outcome {
                report.validations.push((n, hits));
                if best.as_ref().is_none_or(|(b, _)| hits > *b) {
                    best = Some((hits, store.clone()));
                    report.best_epoch = Some(n);
                    patience = 0;
                } else {
                    patience += 1;
                    if patience >= cfg.early_stop_patience {
                        report.stopped_early = true;
                        break;
                    }
                }
            }
        }
    }
    report.final_lr_scale = opt.lr_scale;
    report.train_seconds = train_time.as_secs_f64();
    report.validation_seconds = valid_time.as_secs_f64();
    let store = best.map_or(store, |(_, s)| s);
    Ok((store, report))
}

/// Trains a fresh store on one snapshot. Validation uses filtered Hits@10 on
/// the validation split.
pub fn train_offline(
    snapshot: &Snapshot,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    phases: &PhaseCounters,
) -> Result<(EmbeddingStore, TrainingReport)> {
    let valid_counters = phases.phase(Phase::Validation);
    let mut validator = |store: &EmbeddingStore| -> Result<Option<f64>> {
        if snapshot.valid.is_empty() {
            return Ok(None);
        }
        let rep = link_prediction(
            spec,
            store,
            snapshot,
            &snapshot.valid,
            &[10],
            valid_counters,
        )?;
        Ok(rep.hits_at(10))
    };
    train_offline_with_validator(snapshot, spec, cfg, phases, &mut validator)
}

pub fn train_offline_with_validator(
    snapshot: &Snapshot,
    spec: &ModelSpec,
    cfg: &TrainConfig,
    phases: &PhaseCounters,
    validator: &mut Validator<'_>,
) -> Result<(EmbeddingStore, TrainingReport)> {
    cfg.validate()?;
    if snapshot.train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let store = init_parameters(spec, snapshot.vertices(), snapshot.relations(), cfg.seed)?;
    let mut rng = derive_rng(cfg.seed, streams::TRAINING);
    let mut opt = OptimizerState::new(cfg.optimizer, store.layout());
    let schedule = vec![EpochKind::General; cfg.num_epoch];
    let counters = phases.phase(Phase::Offline);
    run_schedule(
        store,
        &schedule,
        cfg,
        &mut opt,
        validator,
        |_, store, opt| {
            let lr = cfg.learning_rate * opt.lr_scale;
            run_epoch_general(store, snapshot, spec, cfg, opt, lr, &mut rng, counters)
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, RelationId, Triple, TripleSet};

    fn tiny_store(kind: ModelKind) -> EmbeddingStore {
        let spec = ModelSpec::with_dim(kind, 2);
        let mut s = EmbeddingStore::new(spec.layout());
        s.set_block(
            ParamKey::Entity(EntityId(0)),
            &vec![1.0; spec.layout().entity_width()],
        )
        .unwrap();
        s.set_block(
            ParamKey::Relation(RelationId(0)),
            &vec![0.0, 0.0, 0.0, 1.0][..spec.layout().relation_width()],
        )
        .unwrap();
        s
    }

    #[test]
    fn adagrad_first_step_is_learning_rate() {
        let mut store = tiny_store(ModelKind::DistMult);
        let mut opt = OptimizerState::new(OptimizerKind::Adagrad, store.layout());
        let mut g = SparseGrad::new();
        g.add(ParamKey::Entity(EntityId(0)), &[2.0, 0.0]);
        apply_gradients(&mut store, &g, &mut opt, 0.1, &Counters::new()).unwrap();
        let e = store.entity(EntityId(0)).unwrap();
        assert_eq!(e[0], 1.0 - 0.1 * 0.9999999987500001);
        assert_eq!(e[1], 1.0);
        assert_eq!(
            opt.accumulated(ParamKey::Entity(EntityId(0))).unwrap(),
            &[4.0, 0.0]
        );
    }

    #[test]
    fn zero_gradient_changes_nothing() {
        let mut store = tiny_store(ModelKind::DistMult);
        let before = store.clone();
        let mut opt = OptimizerState::new(OptimizerKind::Adagrad, store.layout());
        let mut g = SparseGrad::new();
        g.add(ParamKey::Entity(EntityId(0)), &[0.0, 0.0]);
        let c = Counters::new();
        apply_gradients(&mut store, &g, &mut opt, 0.1, &c).unwrap();
        assert_eq!(store, before);
        assert_eq!(
            opt.accumulated(ParamKey::Entity(EntityId(0))).unwrap(),
            &[0.0, 0.0]
        );
        assert_eq!(c.get().gradient_steps, 1);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut store = tiny_store(ModelKind::TransE);
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, store.layout());
        let mut g = SparseGrad::new();
        g.add(ParamKey::Entity(EntityId(0)), &[1.0]);
        assert!(matches!(
            apply_gradients(&mut store, &g, &mut opt, 0.1, &Counters::new()),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn transh_normal_renormalized() {
        let mut store = tiny_store(ModelKind::TransH);
        let mut opt = OptimizerState::new(OptimizerKind::Sgd, store.layout());
        let mut g = SparseGrad::new();
        g.add(ParamKey::Relation(RelationId(0)), &[0.0, 0.0, -1.0, 0.0]);
        apply_gradients(&mut store, &g, &mut opt, 1.0, &Counters::new()).unwrap();
        let w = &store.relation(RelationId(0)).unwrap()[2..];
        assert!((crate::linalg::norm2(w) - 1.0).abs() < 1e-15);
        assert!((w[0] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    }

    fn count_decays(history: &[f64]) -> usize {
        let cfg = TrainConfig::default();
        let mut opt = OptimizerState::new(
            OptimizerKind::Sgd,
            &ModelSpec::with_dim(ModelKind::TransE, 1).layout(),
        );
        (1..=history.len())
            .filter(|&n| maybe_decay_lr(&mut opt, &history[..n], &cfg))
            .count()
    }

    #[test]
    fn decay_after_twenty_flat_epochs() {
        assert_eq!(count_decays(&[1.0; 20]), 0);
        assert_eq!(count_decays(&[1.0; 21]), 1);
        assert_eq!(count_decays(&[1.0; 41]), 2);
    }

    #[test]
    fn steady_improvement_never_decays() {
        let h: Vec<f64> = (0..100).map(|i| 0.99f64.powi(i)).collect();
        assert_eq!(count_decays(&h), 0);
        // 0.4% per epoch is below the threshold.
        let h: Vec<f64> = (0..21).map(|i| 0.996f64.powi(i)).collect();
        assert_eq!(count_decays(&h), 1);
    }

    #[test]
    fn batches_cover_everything_once() {
        assert_eq!(batch_ranges(10, 3), vec![0..3, 3..6, 6..10]);
        assert_eq!(batch_ranges(3, 3), vec![0..1, 1..2, 2..3]);
        assert_eq!(batch_ranges(2, 5), vec![0..1, 1..2]);
        assert!(batch_ranges(0, 5).is_empty());
    }

    fn chain_snapshot(n: u32) -> Snapshot {
        let train: TripleSet = (0..n - 1).map(|i| Triple::new(i, 0, i + 1)).collect();
        let valid: TripleSet = [Triple::new(0, 0, 2)].into_iter().collect();
        Snapshot::from_splits(0, train, valid, TripleSet::new())
    }

    #[test]
    fn general_epoch_counts_two_scores_per_fact() {
        let s = chain_snapshot(12);
        let spec = ModelSpec::with_dim(ModelKind::TransE, 4);
        let cfg = TrainConfig {
            num_batch: 3,
            ..TrainConfig::for_model(ModelKind::TransE)
        };
        let mut store = init_parameters(&spec, s.vertices(), s.relations(), 1).unwrap();
        let mut opt = OptimizerState::new(cfg.optimizer, store.layout());
        let c = Counters::new();
        run_epoch_general(
            &mut store,
            &s,
            &spec,
            &cfg,
            &mut opt,
            0.01,
            &mut derive_rng(1, 0),
            &c,
        )
        .unwrap();
        assert_eq!(c.get().score_evaluations, 2 * 11);
    }

    #[test]
    fn early_stop_on_degrading_validation() {
        let s = chain_snapshot(8);
        let spec = ModelSpec::with_dim(ModelKind::TransE, 2);
        let cfg = TrainConfig {
            num_epoch: 1000,
            valid_steps: 10,
            early_stop_patience: 10,
            ..TrainConfig::default()
        };
        let phases = PhaseCounters::new();
        let mut calls = 0;
        let mut first: Option<EmbeddingStore> = None;
        let mut validator = |store: &EmbeddingStore| -> Result<Option<f64>> {
            calls += 1;
            if first.is_none() {
                first = Some(store.clone());
            }
            Ok(Some(1.0 / calls as f64))
        };
        let (store, report) =
            train_offline_with_validator(&s, &spec, &cfg, &phases, &mut validator).unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.epochs_run(), 10 * 11);
        assert_eq!(report.best_epoch, Some(10));
        assert_eq!(Some(store), first);
    }

    #[test]
    fn training_reduces_loss() {
        let s = chain_snapshot(10);
        let spec = ModelSpec::with_dim(ModelKind::TransE, 8);
        let cfg = TrainConfig {
            num_epoch: 200,
            num_batch: 2,
            learning_rate: 0.01,
            validation: false,
            ..TrainConfig::default()
        };
        let (_, report) = train_offline(&s, &spec, &cfg, &PhaseCounters::new()).unwrap();
        let first = report.epoch_losses[0];
        let last = *report.epoch_losses.last().unwrap();
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn empty_training_set_is_an_error() {
        let s = Snapshot::from_splits(0, TripleSet::new(), TripleSet::new(), TripleSet::new());
        let spec = ModelSpec::with_dim(ModelKind::TransE, 2);
        assert!(matches!(
            train_offline(&s, &spec, &TrainConfig::default(), &PhaseCounters::new()),
            Err(Error::EmptyTrainingSet)
        ));
    }
}
