//! Negative sampling for training pairs: corrupted triples for positives and
//! corrected triples for deleted facts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{Snapshot, Triple};
use crate::rng::{rng_from_seed, KgRng};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Rejection attempts before a corrupted-triple draw gives up.
    pub max_rejection_attempts: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            max_rejection_attempts: 100,
        }
    }
}

impl SamplerConfig {
    pub fn rng(&self) -> KgRng {
        rng_from_seed(self.seed)
    }
}

/// Which position of a triple a corruption may replace.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorruptSide {
    /// Head or tail with equal probability.
    Either,
    Head,
    Tail,
}

/// Replaces the head or the tail of `t` by a uniform entity of the snapshot,
/// rejecting results that are training facts.
pub fn sample_corrupted(
    t: &Triple,
    snapshot: &Snapshot,
    rng: &mut KgRng,
    cfg: &SamplerConfig,
) -> Result<Triple> {
    sample_corrupted_side(
        t,
        CorruptSide::Either,
        snapshot,
        rng,
        cfg.max_rejection_attempts,
    )
}

pub fn sample_corrupted_side(
    t: &Triple,
    side: CorruptSide,
    snapshot: &Snapshot,
    rng: &mut KgRng,
    max_attempts: usize,
) -> Result<Triple> {
    let vertices = snapshot.vertices();
    if vertices.is_empty() {
        return Err(Error::SamplerExhausted {
            triple: *t,
            attempts: 0,
        });
    }
    for _ in 0..max_attempts {
        let head = match side {
            CorruptSide::Either => rng.gen_bool(0.5),
            CorruptSide::Head => true,
            CorruptSide::Tail => false,
        };
        let e = vertices[rng.gen_range(0..vertices.len())];
        let c = if head { t.with_head(e) } else { t.with_tail(e) };
        if !snapshot.train.contains(&c) {
            return Ok(c);
        }
    }
    Err(Error::SamplerExhausted {
        triple: *t,
        attempts: max_attempts,
    })
}

/// Training fact standing in for a deleted triple: uniform over facts that
/// share its head and relation or its relation and tail, or over the whole
/// training set when there are none.
pub fn sample_corrected(deleted: &Triple, snapshot: &Snapshot, rng: &mut KgRng) -> Result<Triple> {
    let train = &snapshot.train;
    if train.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let tails = train.tails_of(deleted.head, deleted.relation);
    let heads = train.heads_of(deleted.relation, deleted.tail);
    let n = tails.len() + heads.len();
    if n == 0 {
        return Ok(train.as_slice()[rng.gen_range(0..train.len())]);
    }
    let k = rng.gen_range(0..n);
    Ok(if k < tails.len() {
        deleted.with_tail(tails[k])
    } else {
        deleted.with_head(heads[k - tails.len()])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::TripleSet;
    use std::collections::BTreeMap;

    fn snapshot(train: &[(u32, u32, u32)], n_entities: u32) -> Snapshot {
        Snapshot::new(
            0,
            (0..n_entities).map(crate::kg::EntityId),
            [crate::kg::RelationId(0), crate::kg::RelationId(1)],
            train
                .iter()
                .map(|&(h, r, t)| Triple::new(h, r, t))
                .collect(),
            TripleSet::new(),
            TripleSet::new(),
        )
    }

    #[test]
    fn exhausted_when_every_corruption_is_a_fact() {
        let s = snapshot(&[(0, 0, 0), (0, 0, 1), (1, 0, 0), (1, 0, 1)], 2);
        let mut rng = rng_from_seed(1);
        let err = sample_corrupted(
            &Triple::new(0, 0, 1),
            &s,
            &mut rng,
            &SamplerConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::SamplerExhausted { attempts: 100, .. }));
    }

    #[test]
    fn corrupted_triples_are_not_facts_and_keep_one_side() {
        let s = snapshot(&[(0, 0, 1), (1, 0, 2), (2, 0, 3)], 6);
        let mut rng = rng_from_seed(2);
        let t = Triple::new(1, 0, 2);
        for _ in 0..500 {
            let c = sample_corrupted(&t, &s, &mut rng, &SamplerConfig::default()).unwrap();
            assert!(!s.train.contains(&c));
            assert_eq!(c.relation, t.relation);
            assert!(c.head == t.head || c.tail == t.tail);
        }
    }

    #[test]
    fn corrupted_distribution_is_uniform_over_candidates() {
        // Candidates: heads {0,2,3} x tail 1 and head 0 x tails {0,2,3}; one fact (0,0,1).
        let s = snapshot(&[(0, 0, 1)], 4);
        let mut rng = rng_from_seed(3);
        let t = Triple::new(0, 0, 1);
        let mut counts: BTreeMap<Triple, usize> = BTreeMap::new();
        let n = 60_000;
        for _ in 0..n {
            *counts
                .entry(sample_corrupted(&t, &s, &mut rng, &SamplerConfig::default()).unwrap())
                .or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        // Each candidate has probability 1/6 (side 1/2, entity 1/3 after rejection).
        for (c, k) in counts {
            let p = k as f64 / n as f64;
            assert!((p - 1.0 / 6.0).abs() < 0.01, "{c}: {p}");
        }
    }

    #[test]
    fn head_only_corruption() {
        let s = snapshot(&[(0, 0, 1)], 5);
        let mut rng = rng_from_seed(4);
        for _ in 0..100 {
            let c =
                sample_corrupted_side(&Triple::new(0, 0, 1), CorruptSide::Head, &s, &mut rng, 100)
                    .unwrap();
            assert_eq!(c.tail.0, 1);
        }
    }

    #[test]
    fn corrected_picks_neighbors_uniformly() {
        // Deleted (0, 0, 1); facts (0, 0, 2) and (3, 0, 1) qualify, (4, 1, 5) does not.
        let s = snapshot(&[(0, 0, 2), (3, 0, 1), (4, 1, 5)], 6);
        let mut rng = rng_from_seed(5);
        let mut a = 0;
        let n = 20_000;
        for _ in 0..n {
            let c = sample_corrected(&Triple::new(0, 0, 1), &s, &mut rng).unwrap();
            assert!(c == Triple::new(0, 0, 2) || c == Triple::new(3, 0, 1));
            if c == Triple::new(0, 0, 2) {
                a += 1;
            }
        }
        assert!((a as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn corrected_falls_back_to_whole_training_set() {
        let s = snapshot(&[(4, 1, 5)], 6);
        let mut rng = rng_from_seed(6);
        assert_eq!(
            sample_corrected(&Triple::new(0, 0, 1), &s, &mut rng).unwrap(),
            Triple::new(4, 1, 5)
        );
    }

    #[test]
    fn corrected_on_empty_training_set_fails() {
        let s = snapshot(&[], 3);
        let mut rng = rng_from_seed(7);
        assert!(matches!(
            sample_corrected(&Triple::new(0, 0, 1), &s, &mut rng),
            Err(Error::EmptyTrainingSet)
        ));
    }
}
