//! Knowledge graph embeddings that follow an evolving graph.
//!
//! A timeline of [`Snapshot`]s is embedded once offline; each later snapshot
//! is reached by an online update that initializes new entities and
//! relations from their neighborhood and then runs a short mix of
//! change-specific and general training epochs.

// `!(a < b)` style comparisons are deliberate: they treat NaN as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod counters;
pub mod datasets;
pub mod dyninit;
pub mod error;
pub mod eval;
pub mod kg;
pub mod linalg;
pub mod models;
pub mod online;
pub mod rng;
pub mod sampling;
pub mod training;

pub use counters::{CounterSet, Counters, Phase, PhaseCounters};
pub use error::{Error, Result};
pub use kg::{
    apply_changes, diff_snapshots, validate_snapshot, ChangeSet, Dictionary, EntityId, RelationId,
    Snapshot, Split, Triple, TripleSet, Violation,
};
pub use models::{
    EmbeddingStore, Layout, LossKind, ModelKind, ModelSpec, Norm, ParamKey, SparseGrad,
};
pub use rng::{derive_rng, rng_from_seed, KgRng};
