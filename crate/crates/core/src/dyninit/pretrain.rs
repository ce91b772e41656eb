use rand::Rng;
use serde::{Deserialize, Serialize};

use super::order::Element;
use super::InitConfig;
use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::kg::{Snapshot, Triple};
use crate::models::{
    add_score_grad, score_rows, sigmoid, softplus, EmbeddingStore, LossKind, ModelSpec, ParamKey,
    SparseGrad,
};
use crate::rng::KgRng;
use crate::sampling::CorruptSide;
use crate::training::{apply_gradients, OptimizerState, TrainConfig};

/// Corrupts one side of `t` with an entity that is already embedded,
/// rejecting training facts. `None` after `max_attempts` rejections.
pub fn sample_embedded_negative(
    t: &Triple,
    side: CorruptSide,
    snapshot: &Snapshot,
    store: &EmbeddingStore,
    rng: &mut KgRng,
    max_attempts: usize,
) -> Option<Triple> {
    let vs = snapshot.vertices();
    if vs.is_empty() {
        return None;
    }
    for _ in 0..max_attempts {
        let head = match side {
            CorruptSide::Either => rng.gen_bool(0.5),
            CorruptSide::Head => true,
            CorruptSide::Tail => false,
        };
        let e = vs[rng.gen_range(0..vs.len())];
        let c = if head { t.with_head(e) } else { t.with_tail(e) };
        if store.has_entity(e) && !snapshot.train.contains(&c) {
            return Some(c);
        }
    }
    None
}

/// Evidence triples of an element with the side their negatives corrupt:
/// either side for relations, the partner side for entities.
pub(crate) fn evidence_with_sides<'a>(
    element: Element,
    incoming: &'a [Triple],
    outgoing: &'a [Triple],
) -> impl Iterator<Item = (&'a Triple, CorruptSide)> {
    let (inc_side, out_side) = match element {
        Element::Relation(_) => (CorruptSide::Either, CorruptSide::Either),
        Element::Entity(_) => (CorruptSide::Head, CorruptSide::Tail),
    };
    incoming
        .iter()
        .map(move |t| (t, inc_side))
        .chain(outgoing.iter().map(move |t| (t, out_side)))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainOutcome {
    /// Loss at the start of every epoch.
    pub losses: Vec<f64>,
    /// Epoch (from 0) whose starting block was kept.
    pub best_epoch: usize,
    pub lr_halvings: usize,
    pub skipped_negatives: usize,
}

fn key_of(element: Element) -> ParamKey {
    match element {
        Element::Entity(e) => ParamKey::Entity(e),
        Element::Relation(r) => ParamKey::Relation(r),
    }
}

/// `scale * d f(t) / d element` added into `out`.
fn add_element_grad(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    t: &Triple,
    element: Element,
    scale: f64,
    out: &mut [f64],
) {
    let layout = store.layout();
    let (h, r, tl) = (
        store.entity(t.head).expect("resolved"),
        store.relation(t.relation).expect("resolved"),
        store.entity(t.tail).expect("resolved"),
    );
    let mut gh = vec![0.0; layout.entity_width()];
    let mut gr = vec![0.0; layout.relation_width()];
    let mut gt = vec![0.0; layout.entity_width()];
    add_score_grad(spec, h, r, tl, scale, &mut gh, &mut gr, &mut gt);
    let mut add = |g: &[f64]| out.iter_mut().zip(g).for_each(|(o, g)| *o += g);
    match element {
        Element::Relation(_) => add(&gr),
        Element::Entity(e) => {
            if t.head == e {
                add(&gh);
            }
            if t.tail == e {
                add(&gt);
            }
        }
    }
}

fn triple_score(spec: &ModelSpec, store: &EmbeddingStore, t: &Triple) -> Result<f64> {
    let h = store.entity(t.head).ok_or(Error::MissingEntity(t.head))?;
    let r = store
        .relation(t.relation)
        .ok_or(Error::MissingRelation(t.relation))?;
    let tl = store.entity(t.tail).ok_or(Error::MissingEntity(t.tail))?;
    Ok(score_rows(spec, h, r, tl))
}

/// Loss and element gradient of one evidence triple and its negatives, the
/// negatives averaged with weight `1/n`.
fn term(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    element: Element,
    pos: &Triple,
    negs: &[Triple],
    grad: &mut [f64],
) -> Result<f64> {
    let fp = triple_score(spec, store, pos)?;
    let fn_: Vec<f64> = negs
        .iter()
        .map(|n| triple_score(spec, store, n))
        .collect::<Result<_>>()?;
    let w = if negs.is_empty() {
        0.0
    } else {
        1.0 / negs.len() as f64
    };
    match spec.loss {
        LossKind::Pairwise => {
            let z = spec.margin - fp + w * fn_.iter().sum::<f64>();
            if z <= 0.0 {
                return Ok(0.0);
            }
            add_element_grad(spec, store, pos, element, -1.0, grad);
            for n in negs {
                add_element_grad(spec, store, n, element, w, grad);
            }
            Ok(z)
        }
        LossKind::Logistic => {
            let mut loss = softplus(-fp);
            add_element_grad(spec, store, pos, element, -sigmoid(-fp), grad);
            for (n, f) in negs.iter().zip(&fn_) {
                loss += w * softplus(*f);
                add_element_grad(spec, store, n, element, w * sigmoid(*f), grad);
            }
            Ok(loss)
        }
    }
}

/// Gradient descent on one new element's block with every other block
/// frozen. Negatives are redrawn each epoch. The block with the lowest
/// epoch loss is written back to the store.
#[allow(clippy::too_many_arguments)]
pub fn pretrain_new_element(
    element: Element,
    incoming: &[Triple],
    outgoing: &[Triple],
    spec: &ModelSpec,
    store: &mut EmbeddingStore,
    cfg: &InitConfig,
    snapshot: &Snapshot,
    rng: &mut KgRng,
    counters: &Counters,
) -> Result<PretrainOutcome> {
    let key = key_of(element);
    let mut out = PretrainOutcome::default();
    if incoming.is_empty() && outgoing.is_empty() {
        return Ok(out);
    }
    let start = store
        .block(key)
        .ok_or_else(|| Error::Contract(format!("{element:?} is not pre-initialized")))?;
    let width = start.len();
    let mut best = (f64::INFINITY, start.to_vec());
    let mut opt = OptimizerState::new(TrainConfig::for_model(spec.kind).optimizer, store.layout());
    let mut lr = cfg.init_lr;
    let mut stale = 0;
    for epoch in 0..cfg.init_times {
        let mut grad = vec![0.0; width];
        let mut loss = 0.0;
        let mut scored = 0u64;
        for (pos, side) in evidence_with_sides(element, incoming, outgoing) {
            let mut negs = Vec::with_capacity(cfg.init_negs);
            for _ in 0..cfg.init_negs {
                match sample_embedded_negative(
                    pos,
                    side,
                    snapshot,
                    store,
                    rng,
                    cfg.max_rejection_attempts,
                ) {
                    Some(n) => negs.push(n),
                    None => out.skipped_negatives += 1,
                }
            }
            loss += term(spec, store, element, pos, &negs, &mut grad)?;
            scored += 1 + negs.len() as u64;
        }
        counters.add_scores(scored);
        if let Some(prev) = out.losses.last() {
            if loss > 0.99 * prev {
                stale += 1;
                if stale == 5 {
                    lr *= 0.5;
                    out.lr_halvings += 1;
                    stale = 0;
                }
            } else {
                stale = 0;
            }
        }
        out.losses.push(loss);
        if loss < best.0 {
            best = (loss, store.block(key).expect("present").to_vec());
            out.best_epoch = epoch;
        }
        if loss == 0.0 {
            break;
        }
        let mut g = SparseGrad::new();
        g.add(key, &grad);
        apply_gradients(store, &g, &mut opt, lr, counters)?;
    }
    store.set_block(key, &best.1)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, RelationId, TripleSet};
    use crate::models::ModelKind;
    use crate::rng::rng_from_seed;

    fn cfg() -> InitConfig {
        InitConfig::for_model(ModelKind::TransE)
    }

    /// Entities 0 and 2 with relation 0; entity 2 is the new one and its only
    /// possible negative is the self-loop (2, 0, 2).
    fn toy(v: f64) -> (ModelSpec, EmbeddingStore, Snapshot) {
        let spec = ModelSpec::with_dim(ModelKind::TransE, 1);
        let mut s = EmbeddingStore::new(spec.layout());
        s.set_block(ParamKey::Entity(EntityId(0)), &[0.0]).unwrap();
        s.set_block(ParamKey::Entity(EntityId(2)), &[v]).unwrap();
        s.set_block(ParamKey::Relation(RelationId(0)), &[1.0])
            .unwrap();
        let train: TripleSet = [Triple::new(0, 0, 2)].into_iter().collect();
        let snap = Snapshot::new(
            1,
            [EntityId(0), EntityId(2)],
            [RelationId(0)],
            train,
            TripleSet::new(),
            TripleSet::new(),
        );
        (spec, s, snap)
    }

    #[test]
    fn zero_loss_stops_after_one_epoch() {
        // Positive distance 0, negative distance |2 - 1 - 2| = 1; margin 1.
        let (spec, mut s, snap) = toy(1.0);
        let c = Counters::new();
        let ev = [Triple::new(0, 0, 2)];
        let out = pretrain_new_element(
            Element::Entity(EntityId(2)),
            &ev,
            &[],
            &spec,
            &mut s,
            &cfg(),
            &snap,
            &mut rng_from_seed(0),
            &c,
        )
        .unwrap();
        assert_eq!(out.losses, vec![0.0]);
        assert_eq!(s.entity(EntityId(2)).unwrap(), &[1.0]);
        assert_eq!(c.get().gradient_steps, 0);
        assert_eq!(c.get().score_evaluations, 2);
    }

    #[test]
    fn loss_decreases_until_hinge_closes() {
        let (mut spec, mut s, snap) = toy(0.2);
        spec.margin = 0.5;
        let mut cfg = cfg();
        cfg.init_lr = 0.05;
        cfg.init_times = 200;
        let c = Counters::new();
        let ev = [Triple::new(0, 0, 2)];
        let out = pretrain_new_element(
            Element::Entity(EntityId(2)),
            &ev,
            &[],
            &spec,
            &mut s,
            &cfg,
            &snap,
            &mut rng_from_seed(1),
            &c,
        )
        .unwrap();
        let positive: Vec<f64> = out
            .losses
            .iter()
            .copied()
            .take_while(|l| *l > 0.0)
            .collect();
        assert!(positive.len() > 2);
        assert!(positive.windows(2).all(|w| w[1] < w[0]), "{:?}", out.losses);
        assert!(c.get().gradient_steps as usize <= cfg.init_times);
        assert_eq!(out.lr_halvings, 0);
    }

    #[test]
    fn other_blocks_stay_frozen() {
        let (spec, mut s, snap) = toy(-3.0);
        let before = s.clone();
        let ev = [Triple::new(0, 0, 2)];
        pretrain_new_element(
            Element::Entity(EntityId(2)),
            &ev,
            &[],
            &spec,
            &mut s,
            &cfg(),
            &snap,
            &mut rng_from_seed(2),
            &Counters::new(),
        )
        .unwrap();
        assert_eq!(s.entity(EntityId(0)), before.entity(EntityId(0)));
        assert_eq!(s.relation(RelationId(0)), before.relation(RelationId(0)));
        assert_ne!(s.entity(EntityId(2)), before.entity(EntityId(2)));
    }

    #[test]
    fn empty_evidence_is_a_no_op() {
        let (spec, mut s, snap) = toy(0.4);
        let before = s.clone();
        let out = pretrain_new_element(
            Element::Entity(EntityId(2)),
            &[],
            &[],
            &spec,
            &mut s,
            &cfg(),
            &snap,
            &mut rng_from_seed(2),
            &Counters::new(),
        )
        .unwrap();
        assert!(out.losses.is_empty());
        assert_eq!(s, before);
    }

    #[test]
    fn keeps_best_block_when_loss_rises() {
        // A huge learning rate overshoots, so the first block stays best.
        let (spec, mut s, snap) = toy(-3.0);
        let mut cfg = cfg();
        cfg.init_lr = 50.0;
        cfg.init_times = 3;
        let ev = [Triple::new(0, 0, 2)];
        let out = pretrain_new_element(
            Element::Entity(EntityId(2)),
            &ev,
            &[],
            &spec,
            &mut s,
            &cfg,
            &snap,
            &mut rng_from_seed(2),
            &Counters::new(),
        )
        .unwrap();
        let min = out.losses.iter().copied().fold(f64::INFINITY, f64::min);
        assert_eq!(out.losses[out.best_epoch], min);
        let (_, mut check, _) = toy(0.0);
        check
            .set_block(
                ParamKey::Entity(EntityId(2)),
                s.entity(EntityId(2)).unwrap(),
            )
            .unwrap();
        let mut g = vec![0.0];
        let neg = [Triple::new(2, 0, 2)];
        let l = term(
            &spec,
            &check,
            Element::Entity(EntityId(2)),
            &ev[0],
            &neg,
            &mut g,
        )
        .unwrap();
        assert_eq!(l, min);
    }
}
