use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::kg::{EntityId, Snapshot, Triple, TripleSet};
use crate::models::{score_unchecked, EmbeddingStore, ModelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub triple: Triple,
    pub side: Side,
    /// Rank among candidates that are not known facts; ties count against
    /// the target.
    pub rank: usize,
    /// Rank among all candidates.
    pub raw_rank: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPredictionReport {
    pub mr: f64,
    pub mrr: f64,
    /// `(k, Hits@k)` in the requested order.
    pub hits: Vec<(usize, f64)>,
    pub ranks: Vec<RankRecord>,
}

impl LinkPredictionReport {
    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }

    pub fn from_ranks(ranks: Vec<RankRecord>, ks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::EmptyEvaluationSet);
        }
        let n = ranks.len() as f64;
        let mr = ranks.iter().map(|r| r.rank as f64).sum::<f64>() / n;
        let mrr = ranks.iter().map(|r| 1.0 / r.rank as f64).sum::<f64>() / n;
        let hits = ks
            .iter()
            .map(|&k| (k, ranks.iter().filter(|r| r.rank <= k).count() as f64 / n))
            .collect();
        Ok(Self {
            mr,
            mrr,
            hits,
            ranks,
        })
    }
}

/// Head and tail replacement ranks of every triple in `eval_set`, filtered
/// against all facts of the snapshot.
pub fn link_prediction(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    snapshot: &Snapshot,
    eval_set: &TripleSet,
    ks: &[usize],
    counters: &Counters,
) -> Result<LinkPredictionReport> {
    if eval_set.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    if let Some(e) = snapshot.vertices().iter().find(|e| !store.has_entity(**e)) {
        return Err(Error::MissingEntity(*e));
    }
    let per_triple: Vec<Result<[RankRecord; 2]>> = eval_set
        .as_slice()
        .par_iter()
        .map(|t| {
            let head = rank_side(spec, store, snapshot, t, Side::Head, counters)?;
            let tail = rank_side(spec, store, snapshot, t, Side::Tail, counters)?;
            Ok([head, tail])
        })
        .collect();
    let mut ranks = Vec::with_capacity(2 * eval_set.len());
    for r in per_triple {
        ranks.extend(r?);
    }
    LinkPredictionReport::from_ranks(ranks, ks)
}

fn rank_side(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    snapshot: &Snapshot,
    t: &Triple,
    side: Side,
    counters: &Counters,
) -> Result<RankRecord> {
    let replace = |e: EntityId| match side {
        Side::Head => t.with_head(e),
        Side::Tail => t.with_tail(e),
    };
    let target = match side {
        Side::Head => t.head,
        Side::Tail => t.tail,
    };
    let star = score_unchecked(spec, store, t)?;
    let mut raw = 0usize;
    let mut filtered = 0usize;
    let mut evaluated = 1u64;
    for &e in snapshot.vertices() {
        if e == target {
            continue;
        }
        let c = replace(e);
        let s = score_unchecked(spec, store, &c)?;
        evaluated += 1;
        // Pessimistic: ties and NaN scores rank ahead of the target.
        if !(s < star) {
            raw += 1;
            if !snapshot.is_known(&c) {
                filtered += 1;
            }
        }
    }
    counters.add_scores(evaluated);
    Ok(RankRecord {
        triple: *t,
        side,
        rank: filtered + 1,
        raw_rank: raw + 1,
    })
}
