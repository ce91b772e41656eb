//! Initialization of entities and relations that are new in a snapshot.
//!
//! Elements are visited in [`init_order`]. Each gets a starting block from
//! its pre-initialization mode and is then pre-trained on its informative
//! triples while every other block stays frozen.

mod order;
mod preinit;
mod pretrain;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::counters::{CounterSet, Counters};
use crate::error::{Error, Result};
use crate::kg::{ChangeSet, Snapshot, Triple};
use crate::models::{
    normalize_transh_normal, random_entity_block, random_relation_block, EmbeddingStore, ModelKind,
    ModelSpec, ParamKey,
};
use crate::rng::KgRng;
use crate::sampling::CorruptSide;

pub use order::{init_order, Element, OrderStep};
pub use preinit::{
    closest_point_to_lines, entity_line_transh, entity_target_transe, mean_rows, neg2_iterative,
    neg_direct_lines, neg_direct_mean, pos_entity_transe, pos_entity_transh, pos_relation_transe,
    relation_target_transe, Line, Neg2Outcome, RIDGE,
};
pub use pretrain::{pretrain_new_element, sample_embedded_negative, PretrainOutcome};

/// How a new element's block is chosen before pre-training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PreInitMode {
    /// Uniform draw with the bounds of a fresh store.
    Ran,
    /// Mean of all embedded entities or relations.
    Ave,
    /// Closed-form optimum of the translational constraints.
    Pos,
    /// `Pos` with negated worst positions mixed into the mean.
    Neg,
    /// `Pos` followed by jumps away from worst positions.
    Neg2,
}

impl std::str::FromStr for PreInitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| Error::Config(format!("unknown pre-initialization mode `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    #[serde(rename = "preInit")]
    pub pre_init: PreInitMode,
    /// Negatives per informative triple for `neg` and `neg2`.
    #[serde(rename = "preNegs")]
    pub pre_negs: usize,
    /// Epoch cap of `neg2`.
    #[serde(rename = "jumpLim")]
    pub jump_lim: usize,
    /// Fraction of the way towards a best position per `neg2` jump.
    #[serde(rename = "jumpSize")]
    pub jump_size: f64,
    /// Negatives per informative triple during pre-training.
    #[serde(rename = "initNegs")]
    pub init_negs: usize,
    /// Maximum pre-training epochs per element.
    #[serde(rename = "initTimes")]
    pub init_times: usize,
    #[serde(rename = "initLR")]
    pub init_lr: f64,
    /// Pre-training is skipped entirely when false.
    pub pretrain: bool,
    /// Added to the uninformative count in the order priority.
    pub priority_eps: f64,
    #[serde(rename = "init_max_rejection_attempts")]
    pub max_rejection_attempts: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self::for_model(ModelKind::TransE)
    }
}

impl InitConfig {
    pub fn for_model(kind: ModelKind) -> Self {
        Self {
            pre_init: PreInitMode::Ave,
            pre_negs: 4,
            jump_lim: 10,
            jump_size: 0.5,
            init_negs: 1,
            init_times: 50,
            init_lr: if kind.is_translational() { 0.001 } else { 0.1 },
            pretrain: true,
            priority_eps: 1.0,
            max_rejection_attempts: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.jump_lim == 0 || self.init_times == 0 {
            return Err(Error::Config(
                "jumpLim and initTimes must be positive".into(),
            ));
        }
        if !(self.jump_size > 0.0) || !(self.init_lr > 0.0) || !(self.priority_eps > 0.0) {
            return Err(Error::Config(
                "jumpSize, initLR and priority_eps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// What happened to one new element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementReport {
    pub element: Element,
    pub priority: f64,
    pub incoming: usize,
    pub outgoing: usize,
    pub uninformative: usize,
    /// Mode actually used after fallbacks.
    pub mode: PreInitMode,
    pub note: Option<String>,
    /// The least-squares system needed a ridge term.
    pub ridge: bool,
    pub neg2: Option<Neg2Summary>,
    pub pretrain: Option<PretrainOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neg2Summary {
    pub epochs: usize,
    pub jumps: usize,
    pub stable: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub elements: Vec<ElementReport>,
    pub counters: CounterSet,
    pub seconds: f64,
}

impl InitReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

struct Context<'a> {
    spec: &'a ModelSpec,
    snapshot: &'a Snapshot,
    cfg: &'a InitConfig,
    ave_entity: Option<Vec<f64>>,
    ave_relation: Option<Vec<f64>>,
}

struct PreInit {
    block: Vec<f64>,
    mode: PreInitMode,
    note: Option<String>,
    ridge: bool,
    neg2: Option<Neg2Summary>,
}

impl PreInit {
    fn plain(block: Vec<f64>, mode: PreInitMode) -> Self {
        Self {
            block,
            mode,
            note: None,
            ridge: false,
            neg2: None,
        }
    }

    fn noted(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

fn random_block(ctx: &Context<'_>, element: Element, rng: &mut KgRng) -> Vec<f64> {
    match element {
        Element::Entity(_) => random_entity_block(ctx.spec, ctx.snapshot.vertices().len(), rng),
        Element::Relation(_) => {
            random_relation_block(ctx.spec, ctx.snapshot.relations().len(), rng)
        }
    }
}

fn ave_or_ran(ctx: &Context<'_>, element: Element, rng: &mut KgRng) -> PreInit {
    let ave = match element {
        Element::Entity(_) => &ctx.ave_entity,
        Element::Relation(_) => &ctx.ave_relation,
    };
    match ave {
        Some(b) => PreInit::plain(b.clone(), PreInitMode::Ave),
        None => PreInit::plain(random_block(ctx, element, rng), PreInitMode::Ran)
            .noted("nothing embedded to average"),
    }
}

/// Worst position of one corrupted evidence triple, or `None` when no
/// embedded corruption was found.
fn worst_target(
    ctx: &Context<'_>,
    store: &EmbeddingStore,
    element: Element,
    t: &Triple,
    side: CorruptSide,
    rng: &mut KgRng,
) -> Result<Option<Vec<f64>>> {
    let Some(c) = sample_embedded_negative(
        t,
        side,
        ctx.snapshot,
        store,
        rng,
        ctx.cfg.max_rejection_attempts,
    ) else {
        return Ok(None);
    };
    Ok(Some(match element {
        Element::Relation(_) => relation_target_transe(store, &c)?,
        Element::Entity(_) => entity_target_transe(store, &c, side == CorruptSide::Head)?,
    }))
}

fn worst_line(
    ctx: &Context<'_>,
    store: &EmbeddingStore,
    t: &Triple,
    side: CorruptSide,
    rng: &mut KgRng,
) -> Result<Option<Line>> {
    match sample_embedded_negative(
        t,
        side,
        ctx.snapshot,
        store,
        rng,
        ctx.cfg.max_rejection_attempts,
    ) {
        Some(c) => Ok(Some(entity_line_transh(
            store,
            &c,
            side == CorruptSide::Head,
        )?)),
        None => Ok(None),
    }
}

fn preinit(
    ctx: &Context<'_>,
    store: &EmbeddingStore,
    step: &OrderStep,
    rng: &mut KgRng,
) -> Result<PreInit> {
    let element = step.element;
    let mode = ctx.cfg.pre_init;
    match mode {
        PreInitMode::Ran => {
            return Ok(PreInit::plain(
                random_block(ctx, element, rng),
                PreInitMode::Ran,
            ))
        }
        PreInitMode::Ave => return Ok(ave_or_ran(ctx, element, rng)),
        _ => {}
    }
    if step.evidence_len() == 0 {
        return Ok(ave_or_ran(ctx, element, rng).noted("no informative triples"));
    }
    let kind = ctx.spec.kind;
    let transe = kind == ModelKind::TransE;
    let transh_entity = kind == ModelKind::TransH && matches!(element, Element::Entity(_));
    if !transe && !transh_entity {
        return Ok(ave_or_ran(ctx, element, rng)
            .noted(format!("no closed form for {kind} {}", kind_name(element))));
    }
    let evidence: Vec<(Triple, CorruptSide)> =
        pretrain::evidence_with_sides(element, &step.incoming, &step.outgoing)
            .map(|(t, s)| (*t, s))
            .collect();
    let negs = ctx.cfg.pre_negs;

    if transh_entity {
        let best = evidence
            .iter()
            .map(|(t, s)| entity_line_transh(store, t, *s == CorruptSide::Head))
            .collect::<Result<Vec<_>>>()?;
        let mut worst = Vec::new();
        let mut out_mode = mode;
        let mut note = None;
        match mode {
            PreInitMode::Neg => {
                for (t, s) in &evidence {
                    for _ in 0..negs {
                        worst.extend(worst_line(ctx, store, t, *s, rng)?);
                    }
                }
            }
            PreInitMode::Neg2 => {
                out_mode = PreInitMode::Pos;
                note = Some("iterative negatives are TransE only".to_string());
            }
            _ => {}
        }
        let (block, ridge) = neg_direct_lines(&best, &worst).expect("evidence is non-empty");
        return Ok(PreInit {
            block,
            mode: out_mode,
            note,
            ridge,
            neg2: None,
        });
    }

    // TransE from here on.
    let best = evidence
        .iter()
        .map(|(t, s)| match element {
            Element::Relation(_) => relation_target_transe(store, t),
            Element::Entity(_) => entity_target_transe(store, t, *s == CorruptSide::Head),
        })
        .collect::<Result<Vec<_>>>()?;
    match mode {
        PreInitMode::Pos => Ok(PreInit::plain(
            mean_rows(best.iter().map(Vec::as_slice)).expect("non-empty"),
            mode,
        )),
        PreInitMode::Neg => {
            let mut worst = Vec::new();
            for (t, s) in &evidence {
                for _ in 0..negs {
                    worst.extend(worst_target(ctx, store, element, t, *s, rng)?);
                }
            }
            Ok(PreInit::plain(
                neg_direct_mean(&best, &worst).expect("non-empty"),
                mode,
            ))
        }
        PreInitMode::Neg2 => {
            let start = mean_rows(best.iter().map(Vec::as_slice)).expect("non-empty");
            let mut failure = None;
            let out = neg2_iterative(
                start,
                &best,
                |i| {
                    let (t, s) = evidence[i];
                    match worst_target(ctx, store, element, &t, s, rng) {
                        Ok(w) => w,
                        Err(e) => {
                            failure.get_or_insert(e);
                            None
                        }
                    }
                },
                negs,
                ctx.cfg.jump_lim,
                ctx.cfg.jump_size,
                ctx.spec.norm,
            );
            if let Some(e) = failure {
                return Err(e);
            }
            let summary = Neg2Summary {
                epochs: out.epochs,
                jumps: out.jumps,
                stable: out.stable,
            };
            Ok(PreInit {
                block: out.vector,
                mode,
                note: None,
                ridge: false,
                neg2: Some(summary),
            })
        }
        PreInitMode::Ran | PreInitMode::Ave => unreachable!("handled above"),
    }
}

fn kind_name(element: Element) -> &'static str {
    match element {
        Element::Entity(_) => "entities",
        Element::Relation(_) => "relations",
    }
}

/// Initializes every element added by `changeset` in `store`. Blocks of
/// elements that existed before are never written.
pub fn initialize_all(
    changeset: &ChangeSet,
    snapshot_next: &Snapshot,
    spec: &ModelSpec,
    store: &mut EmbeddingStore,
    cfg: &InitConfig,
    rng: &mut KgRng,
    counters: &Counters,
) -> Result<InitReport> {
    cfg.validate()?;
    let start = Instant::now();
    let before = counters.get();
    let old_entities: Vec<_> = snapshot_next
        .vertices()
        .iter()
        .copied()
        .filter(|e| !changeset.is_added_entity(*e))
        .collect();
    let old_relations: Vec<_> = snapshot_next
        .relations()
        .iter()
        .copied()
        .filter(|r| !changeset.is_added_relation(*r))
        .collect();
    if let Some(e) = old_entities.iter().find(|e| !store.has_entity(**e)) {
        return Err(Error::MissingEntity(*e));
    }
    if let Some(r) = old_relations.iter().find(|r| !store.has_relation(**r)) {
        return Err(Error::MissingRelation(*r));
    }
    let mut ave_relation = mean_rows(
        old_relations
            .iter()
            .map(|r| store.relation(*r).expect("checked")),
    );
    if let Some(b) = ave_relation.as_mut() {
        if spec.kind == ModelKind::TransH {
            normalize_transh_normal(spec, b);
        }
    }
    let ctx = Context {
        spec,
        snapshot: snapshot_next,
        cfg,
        ave_entity: mean_rows(
            old_entities
                .iter()
                .map(|e| store.entity(*e).expect("checked")),
        ),
        ave_relation,
    };
    let order = init_order(
        &snapshot_next.train,
        &changeset.added_vertices,
        &changeset.added_relations,
        cfg.priority_eps,
    );
    let mut report = InitReport::default();
    for step in &order {
        let pre = preinit(&ctx, store, step, rng)?;
        let key = match step.element {
            Element::Entity(e) => ParamKey::Entity(e),
            Element::Relation(r) => ParamKey::Relation(r),
        };
        store.set_block(key, &pre.block)?;
        let pretrain = if cfg.pretrain && step.evidence_len() > 0 {
            Some(pretrain_new_element(
                step.element,
                &step.incoming,
                &step.outgoing,
                spec,
                store,
                cfg,
                snapshot_next,
                rng,
                counters,
            )?)
        } else {
            None
        };
        report.elements.push(ElementReport {
            element: step.element,
            priority: step.priority,
            incoming: step.incoming.len(),
            outgoing: step.outgoing.len(),
            uninformative: step.uninformative,
            mode: pre.mode,
            note: pre.note,
            ridge: pre.ridge,
            neg2: pre.neg2,
            pretrain,
        });
    }
    report.counters = counters.get() - before;
    report.seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{diff_snapshots, EntityId, RelationId, TripleSet};
    use crate::models::init_parameters;
    use crate::rng::rng_from_seed;

    fn set(v: &[(u32, u32, u32)]) -> TripleSet {
        v.iter().map(|&(h, r, t)| Triple::new(h, r, t)).collect()
    }

    fn pair(prev: &[(u32, u32, u32)], next: &[(u32, u32, u32)]) -> (Snapshot, Snapshot, ChangeSet) {
        let a = Snapshot::from_splits(0, set(prev), TripleSet::new(), TripleSet::new());
        let b = Snapshot::from_splits(1, set(next), TripleSet::new(), TripleSet::new());
        let cs = diff_snapshots(&a, &b).unwrap();
        (a, b, cs)
    }

    fn base() -> Vec<(u32, u32, u32)> {
        (0..12)
            .map(|i| (i, i % 3, (i * 5 + 1) % 12))
            .filter(|(h, _, t)| h != t)
            .collect()
    }

    #[test]
    fn config_names_and_defaults() {
        let c = InitConfig::for_model(ModelKind::DistMult);
        assert_eq!(
            (c.pre_init, c.init_negs, c.init_times, c.init_lr),
            (PreInitMode::Ave, 1, 50, 0.1)
        );
        assert_eq!(InitConfig::for_model(ModelKind::TransH).init_lr, 0.001);
        let json = serde_json::to_value(&c).unwrap();
        for k in [
            "preInit",
            "preNegs",
            "jumpLim",
            "jumpSize",
            "initNegs",
            "initTimes",
            "initLR",
            "priority_eps",
        ] {
            assert!(json.get(k).is_some(), "{k}");
        }
        let parsed: InitConfig =
            serde_json::from_str(r#"{"preInit":"neg2","jumpSize":0.75}"#).unwrap();
        assert_eq!(parsed.pre_init, PreInitMode::Neg2);
        assert_eq!(parsed.jump_size, 0.75);
        assert_eq!("POS".parse::<PreInitMode>().unwrap(), PreInitMode::Pos);
    }

    #[test]
    fn empty_change_leaves_store() {
        let (a, b, cs) = pair(&base(), &base());
        let spec = ModelSpec::with_dim(ModelKind::TransE, 4);
        let mut store = init_parameters(&spec, a.vertices(), a.relations(), 1).unwrap();
        let before = store.clone();
        let rep = initialize_all(
            &cs,
            &b,
            &spec,
            &mut store,
            &InitConfig::default(),
            &mut rng_from_seed(0),
            &Counters::new(),
        )
        .unwrap();
        assert!(rep.elements.is_empty());
        assert_eq!(store, before);
    }

    #[test]
    fn ave_of_two_entities() {
        let (_, b, cs) = pair(&[(0, 0, 1)], &[(0, 0, 1), (0, 0, 2)]);
        let spec = ModelSpec::with_dim(ModelKind::DistMult, 2);
        let mut store = EmbeddingStore::new(spec.layout());
        store
            .set_block(ParamKey::Entity(EntityId(0)), &[0.0, 0.0])
            .unwrap();
        store
            .set_block(ParamKey::Entity(EntityId(1)), &[2.0, 2.0])
            .unwrap();
        store
            .set_block(ParamKey::Relation(RelationId(0)), &[1.0, 1.0])
            .unwrap();
        let cfg = InitConfig {
            pretrain: false,
            ..InitConfig::for_model(spec.kind)
        };
        initialize_all(
            &cs,
            &b,
            &spec,
            &mut store,
            &cfg,
            &mut rng_from_seed(0),
            &Counters::new(),
        )
        .unwrap();
        assert_eq!(store.entity(EntityId(2)).unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn ran_respects_bounds() {
        let spec = ModelSpec::with_dim(ModelKind::TransE, 5);
        let snap = Snapshot::from_splits(0, set(&[(0, 0, 1)]), TripleSet::new(), TripleSet::new());
        let cfg = InitConfig {
            pre_init: PreInitMode::Ran,
            ..InitConfig::default()
        };
        let ctx = Context {
            spec: &spec,
            snapshot: &snap,
            cfg: &cfg,
            ave_entity: None,
            ave_relation: None,
        };
        let bound = (6.0f64 / (2.0 + 5.0)).sqrt();
        let mut rng = rng_from_seed(9);
        let mut extreme = 0.0f64;
        for _ in 0..2000 {
            for x in random_block(&ctx, Element::Entity(EntityId(0)), &mut rng) {
                assert!(x.abs() <= bound);
                extreme = extreme.max(x.abs());
            }
        }
        assert!(extreme > 0.99 * bound);
    }

    fn check_frozen(before: &EmbeddingStore, after: &EmbeddingStore, cs: &ChangeSet) {
        for e in before.entity_ids() {
            if !cs.is_added_entity(e) {
                assert_eq!(before.entity(e), after.entity(e));
            }
        }
        for r in before.relation_ids() {
            if !cs.is_added_relation(r) {
                assert_eq!(before.relation(r), after.relation(r));
            }
        }
    }

    #[test]
    fn every_mode_and_model_freezes_old_blocks() {
        let mut next = base();
        next.extend([(0, 3, 12), (12, 1, 4), (13, 3, 2), (12, 0, 13), (5, 4, 6)]);
        let (a, b, cs) = pair(&base(), &next);
        assert_eq!(cs.added_vertices, vec![EntityId(12), EntityId(13)]);
        for kind in ModelKind::ALL {
            for mode in [
                PreInitMode::Ran,
                PreInitMode::Ave,
                PreInitMode::Pos,
                PreInitMode::Neg,
                PreInitMode::Neg2,
            ] {
                let spec = ModelSpec::with_dim(kind, 4);
                let mut store = init_parameters(&spec, a.vertices(), a.relations(), 3).unwrap();
                let before = store.clone();
                let cfg = InitConfig {
                    pre_init: mode,
                    init_times: 5,
                    ..InitConfig::for_model(kind)
                };
                let c = Counters::new();
                let rep =
                    initialize_all(&cs, &b, &spec, &mut store, &cfg, &mut rng_from_seed(4), &c)
                        .unwrap();
                check_frozen(&before, &store, &cs);
                assert_eq!(rep.elements.len(), 4);
                for e in [12, 13] {
                    assert!(store.has_entity(EntityId(e)));
                }
                assert!(store.has_relation(RelationId(3)) && store.has_relation(RelationId(4)));
                // Each new element costs at most init_times gradient steps.
                assert!(c.get().gradient_steps <= 5 * 4);
                let expect_fallback = !(kind == ModelKind::TransE
                    || (kind == ModelKind::TransH && mode != PreInitMode::Neg2))
                    && matches!(
                        mode,
                        PreInitMode::Pos | PreInitMode::Neg | PreInitMode::Neg2
                    );
                if expect_fallback {
                    assert!(
                        rep.elements.iter().any(|e| e.note.is_some()),
                        "{kind} {mode:?}"
                    );
                }
                rep.to_json().unwrap();
            }
        }
    }

    #[test]
    fn score_evaluations_respect_bound() {
        let mut next = base();
        next.extend([
            (0, 3, 12),
            (12, 1, 4),
            (13, 3, 2),
            (12, 0, 13),
            (5, 4, 6),
            (7, 3, 8),
        ]);
        let (a, b, cs) = pair(&base(), &next);
        let touching = b.train.iter().filter(|t| cs.touches_added(t)).count() as u64;
        for kind in ModelKind::ALL {
            let spec = ModelSpec::with_dim(kind, 4);
            let mut store = init_parameters(&spec, a.vertices(), a.relations(), 3).unwrap();
            let cfg = InitConfig::for_model(kind);
            let c = Counters::new();
            initialize_all(&cs, &b, &spec, &mut store, &cfg, &mut rng_from_seed(4), &c).unwrap();
            let got = c.get();
            assert!(
                got.score_evaluations <= 50 * touching * 2,
                "{kind}: {got:?}"
            );
            assert!(got.gradient_steps <= 50 * 4);
        }
    }

    #[test]
    fn transe_pos_uses_relation_then_entity() {
        // New relation 1 with two fully embedded triples, new entity 3 that
        // only appears with it.
        let (_, b, cs) = pair(
            &[(0, 0, 1), (1, 0, 2)],
            &[(0, 0, 1), (1, 0, 2), (0, 1, 1), (1, 1, 2), (0, 1, 3)],
        );
        let spec = ModelSpec::with_dim(ModelKind::TransE, 1);
        let mut store = EmbeddingStore::new(spec.layout());
        for (e, x) in [(0, 0.0), (1, 1.0), (2, 3.0)] {
            store
                .set_block(ParamKey::Entity(EntityId(e)), &[x])
                .unwrap();
        }
        store
            .set_block(ParamKey::Relation(RelationId(0)), &[1.0])
            .unwrap();
        let cfg = InitConfig {
            pre_init: PreInitMode::Pos,
            pretrain: false,
            ..InitConfig::default()
        };
        let rep = initialize_all(
            &cs,
            &b,
            &spec,
            &mut store,
            &cfg,
            &mut rng_from_seed(0),
            &Counters::new(),
        )
        .unwrap();
        assert_eq!(rep.elements[0].element, Element::Relation(RelationId(1)));
        assert_eq!(store.relation(RelationId(1)).unwrap(), &[1.5]);
        assert_eq!(rep.elements[1].incoming, 1);
        assert_eq!(store.entity(EntityId(3)).unwrap(), &[1.5]);
    }
}
