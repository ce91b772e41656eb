use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::counters::Counters;
use crate::error::{Error, Result};
use crate::kg::{RelationId, Snapshot, Triple, TripleSet};
use crate::models::{score_unchecked, EmbeddingStore, ModelSpec};
use crate::rng::KgRng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    /// Fraction of correctly classified test triples, positives and negatives.
    pub accuracy: f64,
    pub thresholds: BTreeMap<RelationId, f64>,
    /// Test relations without validation data; they use the median threshold.
    pub fallback_relations: Vec<RelationId>,
    pub test_examples: usize,
}

/// Threshold maximizing accuracy of "true iff score > delta" on labeled
/// scores. Candidates lie below the smallest score, at midpoints between
/// adjacent distinct scores and at the largest score; ties keep the lowest.
pub fn best_threshold(scored: &[(f64, bool)]) -> Option<(f64, f64)> {
    if scored.is_empty() {
        return None;
    }
    let mut v: Vec<(f64, bool)> = scored.to_vec();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = v.len() as f64;
    let total_pos = v.iter().filter(|x| x.1).count();
    // Everything predicted true.
    let mut best = (v[0].0 - 1.0, total_pos as f64 / n);
    let mut neg_below = 0usize;
    let mut pos_below = 0usize;
    let mut i = 0;
    while i < v.len() {
        let s = v[i].0;
        while i < v.len() && v[i].0 == s {
            if v[i].1 {
                pos_below += 1;
            } else {
                neg_below += 1;
            }
            i += 1;
        }
        let delta = if i < v.len() { 0.5 * (s + v[i].0) } else { s };
        let acc = (neg_below + (total_pos - pos_below)) as f64 / n;
        if acc > best.1 {
            best = (delta, acc);
        }
    }
    Some(best)
}

fn corrupt_tail(
    t: &Triple,
    snapshot: &Snapshot,
    rng: &mut KgRng,
    max_attempts: usize,
) -> Option<Triple> {
    let vs = snapshot.vertices();
    (0..max_attempts)
        .map(|_| t.with_tail(vs[rng.gen_range(0..vs.len())]))
        .find(|c| !snapshot.is_known(c))
}

fn labeled_scores(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    snapshot: &Snapshot,
    set: &TripleSet,
    rng: &mut KgRng,
    max_attempts: usize,
    counters: &Counters,
) -> Result<Vec<(RelationId, f64, bool)>> {
    let mut out = Vec::with_capacity(2 * set.len());
    for t in set {
        out.push((t.relation, score_unchecked(spec, store, t)?, true));
        counters.add_scores(1);
        if let Some(c) = corrupt_tail(t, snapshot, rng, max_attempts) {
            out.push((c.relation, score_unchecked(spec, store, &c)?, false));
            counters.add_scores(1);
        }
    }
    Ok(out)
}

/// Triple classification with one tail-corrupted negative per validation and
/// test triple and a per-relation threshold fitted on validation data.
pub fn triple_classification(
    spec: &ModelSpec,
    store: &EmbeddingStore,
    snapshot: &Snapshot,
    rng: &mut KgRng,
    max_attempts: usize,
    counters: &Counters,
) -> Result<ClassificationReport> {
    if snapshot.test.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    let valid = labeled_scores(
        spec,
        store,
        snapshot,
        &snapshot.valid,
        rng,
        max_attempts,
        counters,
    )?;
    let test = labeled_scores(
        spec,
        store,
        snapshot,
        &snapshot.test,
        rng,
        max_attempts,
        counters,
    )?;
    let mut per_rel: BTreeMap<RelationId, Vec<(f64, bool)>> = BTreeMap::new();
    for (r, s, y) in valid {
        per_rel.entry(r).or_default().push((s, y));
    }
    let thresholds: BTreeMap<RelationId, f64> = per_rel
        .iter()
        .filter_map(|(r, v)| best_threshold(v).map(|(d, _)| (*r, d)))
        .collect();
    let median = median(thresholds.values().copied().collect());
    let mut fallback = Vec::new();
    let mut correct = 0usize;
    for (r, s, y) in &test {
        let delta = match thresholds.get(r) {
            Some(d) => *d,
            None => {
                if !fallback.contains(r) {
                    fallback.push(*r);
                }
                median
            }
        };
        if (*s > delta) == *y {
            correct += 1;
        }
    }
    fallback.sort_unstable();
    Ok(ClassificationReport {
        accuracy: correct as f64 / test.len() as f64,
        thresholds,
        fallback_relations: fallback,
        test_examples: test.len(),
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
