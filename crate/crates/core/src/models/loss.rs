use super::kernels::{add_score_grad, score_rows};
use super::store::{EmbeddingStore, ParamKey, SparseGrad};
use super::{LossKind, ModelKind, ModelSpec};
use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::kg::Triple;
use crate::linalg::dot;

/// `ln(1 + e^z)` without overflow or cancellation.
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn rows<'a>(store: &'a EmbeddingStore, t: &Triple) -> Result<(&'a [f64], &'a [f64], &'a [f64])> {
    let h = store.entity(t.head).ok_or(Error::MissingEntity(t.head))?;
    let r = store
        .relation(t.relation)
        .ok_or(Error::MissingRelation(t.relation))?;
    let tl = store.entity(t.tail).ok_or(Error::MissingEntity(t.tail))?;
    Ok((h, r, tl))
}

fn check_layout(spec: &ModelSpec, store: &EmbeddingStore) -> Result<()> {
    let (a, b) = (spec.layout(), store.layout());
    if a.kind != b.kind
        || a.entity_width() != b.entity_width()
        || a.relation_width() != b.relation_width()
    {
        return Err(Error::Contract(format!(
            "model {:?} does not match store layout {:?}",
            a, b
        )));
    }
    Ok(())
}

/// Plausibility score of one triple; counts one score evaluation.
pub fn score(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    t: &Triple,
    counters: &Counters,
) -> Result<f64> {
    check_layout(spec, store)?;
    let (h, r, tl) = rows(store, t)?;
    counters.add_scores(1);
    Ok(score_rows(spec, h, r, tl))
}

pub(crate) fn score_unchecked(spec: &ModelSpec, store: &EmbeddingStore, t: &Triple) -> Result<f64> {
    let (h, r, tl) = rows(store, t)?;
    Ok(score_rows(spec, h, r, tl))
}

fn triple_keys(t: &Triple) -> [ParamKey; 3] {
    [
        ParamKey::Entity(t.head),
        ParamKey::Relation(t.relation),
        ParamKey::Entity(t.tail),
    ]
}

fn dedup_keys(keys: impl IntoIterator<Item = ParamKey>) -> Vec<ParamKey> {
    let mut v: Vec<_> = keys.into_iter().collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// L2 penalty on each listed block, plus the TransH orthogonality
/// constraint on each listed relation.
fn add_regularizers(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    keys: &[ParamKey],
    loss: &mut f64,
    mut grad: Option<&mut SparseGrad>,
) {
    for &key in keys {
        let block = store.block(key).expect("rows were resolved before");
        if spec.l2_weight > 0.0 {
            // Mean rather than sum of squares, so the weight does not scale
            // with the dimension.
            let w = spec.l2_weight / block.len() as f64;
            *loss += w * dot(block, block);
            if let Some(g) = grad.as_deref_mut() {
                let v: Vec<f64> = block.iter().map(|x| 2.0 * w * x).collect();
                g.add(key, &v);
            }
        }
        if spec.kind == ModelKind::TransH
            && matches!(key, ParamKey::Relation(_))
            && spec.transh_c > 0.0
        {
            let d = spec.entity_dim;
            let (r, w) = block.split_at(d);
            let rr = dot(r, r);
            if rr == 0.0 {
                continue;
            }
            let wr = dot(w, r);
            let val = wr * wr / rr - spec.transh_eps * spec.transh_eps;
            if val > 0.0 {
                *loss += spec.transh_c * val;
                if let Some(g) = grad.as_deref_mut() {
                    let c = spec.transh_c;
                    let mut v = vec![0.0; 2 * d];
                    for i in 0..d {
                        v[i] = c * (2.0 * wr * w[i] / rr - 2.0 * wr * wr * r[i] / (rr * rr));
                        v[d + i] = c * 2.0 * wr * r[i] / rr;
                    }
                    g.add(key, &v);
                }
            }
        }
    }
}

fn add_triple_grad(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    t: &Triple,
    scale: f64,
    grad: &mut SparseGrad,
) {
    let (h, r, tl) = rows(store, t).expect("rows were resolved before");
    let layout = store.layout();
    let mut gh = vec![0.0; layout.entity_width()];
    let mut gr = vec![0.0; layout.relation_width()];
    let mut gt = vec![0.0; layout.entity_width()];
    add_score_grad(spec, h, r, tl, scale, &mut gh, &mut gr, &mut gt);
    grad.add(ParamKey::Entity(t.head), &gh);
    grad.add(ParamKey::Relation(t.relation), &gr);
    grad.add(ParamKey::Entity(t.tail), &gt);
}

/// Loss and gradient of one training pair under the model's loss kind.
///
/// The pairwise form is the margin hinge with the L2 penalty on the distinct
/// blocks of both triples. The logistic form is the sum of the logistic loss
/// of the positive and of the negative triple. The two triples may have
/// different relations; counts two score evaluations.
pub fn pair_objective(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    pos: &Triple,
    neg: &Triple,
    counters: &Counters,
    want_grad: bool,
) -> Result<(f64, SparseGrad)> {
    check_layout(spec, store)?;
    let (ph, pr, pt) = rows(store, pos)?;
    let (nh, nr, nt) = rows(store, neg)?;
    counters.add_scores(2);
    let fp = score_rows(spec, ph, pr, pt);
    let fneg = score_rows(spec, nh, nr, nt);
    let mut grad = SparseGrad::new();
    let mut loss;
    match spec.loss {
        LossKind::Pairwise => {
            let z = spec.margin - fp + fneg;
            loss = z.max(0.0);
            if want_grad && z > 0.0 {
                add_triple_grad(spec, store, pos, -1.0, &mut grad);
                add_triple_grad(spec, store, neg, 1.0, &mut grad);
            }
            let keys = dedup_keys(triple_keys(pos).into_iter().chain(triple_keys(neg)));
            add_regularizers(
                spec,
                store,
                &keys,
                &mut loss,
                want_grad.then_some(&mut grad),
            );
        }
        LossKind::Logistic => {
            loss = softplus(-fp) + softplus(fneg);
            if want_grad {
                add_triple_grad(spec, store, pos, -sigmoid(-fp), &mut grad);
                add_triple_grad(spec, store, neg, sigmoid(fneg), &mut grad);
            }
            for t in [pos, neg] {
                let keys = dedup_keys(triple_keys(t));
                add_regularizers(
                    spec,
                    store,
                    &keys,
                    &mut loss,
                    want_grad.then_some(&mut grad),
                );
            }
        }
    }
    Ok((loss, grad))
}

/// Margin ranking loss of a positive and a negative triple sharing a relation.
pub fn loss_pairwise(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    pos: &Triple,
    neg: &Triple,
    counters: &Counters,
) -> Result<f64> {
    if pos.relation != neg.relation {
        return Err(Error::Contract(format!(
            "pairwise loss needs a shared relation: {pos} vs {neg}"
        )));
    }
    let mut s = spec.clone();
    s.loss = LossKind::Pairwise;
    Ok(pair_objective(&s, store, pos, neg, counters, false)?.0)
}

/// Logistic loss of one triple labeled `+1` (true) or `-1` (false).
pub fn loss_logistic(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    t: &Triple,
    label: f64,
    counters: &Counters,
) -> Result<f64> {
    Ok(logistic_objective(spec, store, t, label, counters, false)?.0)
}

fn logistic_objective(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    t: &Triple,
    label: f64,
    counters: &Counters,
    want_grad: bool,
) -> Result<(f64, SparseGrad)> {
    if label != 1.0 && label != -1.0 {
        return Err(Error::Contract(format!(
            "label must be +1 or -1, got {label}"
        )));
    }
    let f = score(spec, store, t, counters)?;
    let mut loss = softplus(-label * f);
    let mut grad = SparseGrad::new();
    if want_grad {
        add_triple_grad(spec, store, t, -label * sigmoid(-label * f), &mut grad);
    }
    add_regularizers(
        spec,
        store,
        &dedup_keys(triple_keys(t)),
        &mut loss,
        want_grad.then_some(&mut grad),
    );
    Ok((loss, grad))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossInputs {
    Pairwise { pos: Triple, neg: Triple },
    Logistic { triple: Triple, label: f64 },
}

/// Analytic gradient of the loss; blocks that do not participate are absent.
pub fn grad(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    inputs: &LossInputs,
    counters: &Counters,
) -> Result<SparseGrad> {
    match *inputs {
        LossInputs::Pairwise { pos, neg } => {
            if pos.relation != neg.relation {
                return Err(Error::Contract(format!(
                    "pairwise loss needs a shared relation: {pos} vs {neg}"
                )));
            }
            let mut s = spec.clone();
            s.loss = LossKind::Pairwise;
            Ok(pair_objective(&s, store, &pos, &neg, counters, true)?.1)
        }
        LossInputs::Logistic { triple, label } => {
            Ok(logistic_objective(spec, store, &triple, label, counters, true)?.1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::{EntityId, RelationId};

    // (f, y, ln(1 + exp(-y f))) at 50-digit precision.
    #[allow(clippy::excessive_precision)]
    const LOGISTIC_ORACLE: &[(f64, f64, f64)] = &[
        (-352.3344703336753, 1.0, 352.3344703336753127587144),
        (-210.35300715365304, 1.0, 210.3530071536530385856167),
        (-855.1274266649145, 1.0, 855.1274266649145374685759),
        (32.77632505144818, 1.0, 5.826703152803665336984241e-15),
        (-37.00034732464121, -1.0, 8.530084402668999138430301e-17),
        (-6.546227890339239, 1.0, 6.547662381303325065713953),
        (-32.742958932490794, -1.0, 6.02439742796931108424309e-15),
        (-35.27115951368087, 1.0, 35.27115951368087158116697),
        (35.795976056599, 1.0, 2.844494669688375486720907e-16),
        (-0.476204464901814, -1.0, 0.4831274271531264970455251),
        (-0.48167679400434693, 1.0, 0.9627110422483280209875219),
        (-3.153396561451234, -1.0, 0.04182004723407684920725711),
        (1.2988272021680194, 1.0, 0.2412597418698241305076992),
        (-4.058765437707815, -1.0, 0.01712289025526492006257505),
        (-3.5820487074054386, 1.0, 3.609487446002133236692694),
    ];

    #[test]
    fn softplus_matches_high_precision_values() {
        for &(f, y, expected) in LOGISTIC_ORACLE {
            let got = softplus(-y * f);
            assert!(
                ((got - expected) / expected).abs() <= 1e-12,
                "f={f} y={y}: {got} vs {expected}"
            );
        }
        assert!(softplus(1000.0).is_finite());
        assert_eq!(softplus(-1000.0), 0.0);
    }

    fn store_2d(kind: ModelKind, ents: &[[f64; 2]], rel: &[f64]) -> (ModelSpec, EmbeddingStore) {
        let mut spec = ModelSpec::with_dim(kind, 2);
        spec.l2_weight = 0.0;
        let mut store = EmbeddingStore::new(spec.layout());
        for (i, e) in ents.iter().enumerate() {
            store
                .set_block(ParamKey::Entity(EntityId(i as u32)), e)
                .unwrap();
        }
        store
            .set_block(ParamKey::Relation(RelationId(0)), rel)
            .unwrap();
        (spec, store)
    }

    #[test]
    fn transe_tail_gradient_points_along_residual() {
        let (spec, store) = store_2d(
            ModelKind::TransE,
            &[[0.0, 0.0], [3.0, 4.0], [0.0, 0.0]],
            &[0.0, 0.0],
        );
        let c = Counters::new();
        let pos = Triple::new(0, 0, 1);
        let neg = Triple::new(0, 0, 2);
        let g = grad(&spec, &store, &LossInputs::Pairwise { pos, neg }, &c).unwrap();
        let gt = g.get(ParamKey::Entity(EntityId(1))).unwrap();
        assert!((gt[0] - 0.6).abs() < 1e-15 && (gt[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn inactive_hinge_has_empty_gradient() {
        let (spec, store) = store_2d(
            ModelKind::TransE,
            &[[0.0, 0.0], [1.0, 0.0], [9.0, 9.0]],
            &[1.0, 0.0],
        );
        let c = Counters::new();
        let inputs = LossInputs::Pairwise {
            pos: Triple::new(0, 0, 1),
            neg: Triple::new(0, 0, 2),
        };
        assert!(grad(&spec, &store, &inputs, &c).unwrap().is_empty());
        assert_eq!(
            loss_pairwise(
                &spec,
                &store,
                &Triple::new(0, 0, 1),
                &Triple::new(0, 0, 2),
                &c
            )
            .unwrap(),
            0.0
        );
    }

    #[test]
    fn hinge_kink_counts_as_inactive() {
        // f(pos) = 0, f(neg) = -1 with margin 1 puts the hinge exactly at zero.
        let (spec, store) = store_2d(
            ModelKind::TransE,
            &[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]],
            &[1.0, 0.0],
        );
        let c = Counters::new();
        let inputs = LossInputs::Pairwise {
            pos: Triple::new(0, 0, 1),
            neg: Triple::new(0, 0, 2),
        };
        assert!(grad(&spec, &store, &inputs, &c).unwrap().is_empty());
    }

    #[test]
    fn relation_mismatch_is_rejected() {
        let (spec, mut store) = store_2d(ModelKind::TransE, &[[0.0, 0.0], [1.0, 0.0]], &[1.0, 0.0]);
        store
            .set_block(ParamKey::Relation(RelationId(1)), &[0.0, 1.0])
            .unwrap();
        let c = Counters::new();
        assert!(loss_pairwise(
            &spec,
            &store,
            &Triple::new(0, 0, 1),
            &Triple::new(0, 1, 1),
            &c
        )
        .is_err());
    }

    #[test]
    fn score_counts_and_checks_presence() {
        let (spec, store) = store_2d(ModelKind::DistMult, &[[1.0, 2.0], [3.0, 4.0]], &[1.0, 1.0]);
        let c = Counters::new();
        assert_eq!(
            score(&spec, &store, &Triple::new(0, 0, 1), &c).unwrap(),
            11.0
        );
        assert!(matches!(
            score(&spec, &store, &Triple::new(0, 0, 7), &c),
            Err(Error::MissingEntity(_))
        ));
        assert_eq!(c.get().score_evaluations, 1);
    }

    #[test]
    fn logistic_label_must_be_signed_unit() {
        let (spec, store) = store_2d(ModelKind::DistMult, &[[1.0, 2.0], [3.0, 4.0]], &[1.0, 1.0]);
        let c = Counters::new();
        assert!(loss_logistic(&spec, &store, &Triple::new(0, 0, 1), 0.5, &c).is_err());
        let l = loss_logistic(&spec, &store, &Triple::new(0, 0, 1), -1.0, &c).unwrap();
        assert!((l - softplus(11.0)).abs() < 1e-15);
    }

    #[test]
    fn transh_constraint_only_when_not_orthogonal() {
        let mut spec = ModelSpec::with_dim(ModelKind::TransH, 2);
        spec.l2_weight = 0.0;
        let mut store = EmbeddingStore::new(spec.layout());
        for i in 0..3 {
            store
                .set_block(ParamKey::Entity(EntityId(i)), &[i as f64, 0.0])
                .unwrap();
        }
        // r orthogonal to w.
        store
            .set_block(ParamKey::Relation(RelationId(0)), &[1.0, 0.0, 0.0, 1.0])
            .unwrap();
        let c = Counters::new();
        let (pos, neg) = (Triple::new(0, 0, 1), Triple::new(0, 0, 2));
        let hinge = (spec.margin - score_unchecked(&spec, &store, &pos).unwrap()
            + score_unchecked(&spec, &store, &neg).unwrap())
        .max(0.0);
        assert_eq!(loss_pairwise(&spec, &store, &pos, &neg, &c).unwrap(), hinge);
        // r along w: (w.r)^2/|r|^2 = 1.
        store
            .set_block(ParamKey::Relation(RelationId(0)), &[0.0, 1.0, 0.0, 1.0])
            .unwrap();
        let hinge = (spec.margin - score_unchecked(&spec, &store, &pos).unwrap()
            + score_unchecked(&spec, &store, &neg).unwrap())
        .max(0.0);
        let expected = hinge + 0.25 * (1.0 - 1e-6);
        assert!((loss_pairwise(&spec, &store, &pos, &neg, &c).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn l2_penalty_counts_distinct_blocks_once() {
        let (mut spec, store) = store_2d(
            ModelKind::TransE,
            &[[1.0, 0.0], [0.0, 1.0], [5.0, 5.0]],
            &[0.0, 2.0],
        );
        spec.l2_weight = 0.5;
        let c = Counters::new();
        // Mean squares of e0, e1, e2, r0 -> 0.5 + 0.5 + 25 + 2.
        let (pos, neg) = (Triple::new(0, 0, 1), Triple::new(0, 0, 2));
        let hinge = (1.0 - score_unchecked(&spec, &store, &pos).unwrap()
            + score_unchecked(&spec, &store, &neg).unwrap())
        .max(0.0);
        let l = loss_pairwise(&spec, &store, &pos, &neg, &c).unwrap();
        assert!((l - hinge - 0.5 * 28.0).abs() < 1e-12);
    }
}
