//! Evaluation: filtered link prediction, triple classification and the
//! normalized movement of embeddings between snapshots.

mod classify;
mod link;
mod nmc;

pub use crate::counters::{CounterSet, Counters, Phase, PhaseCounters};
pub use classify::{best_threshold, triple_classification, ClassificationReport};
pub use link::{link_prediction, LinkPredictionReport, RankRecord, Side};
pub use nmc::{nmc, nmc_parts, nmc_rows, nmc_rows_parts, Distance, ElementKind, NmcParts};

/// Default cut-offs for Hits@k.
pub const DEFAULT_KS: [usize; 4] = [1, 3, 10, 100];
