//! Fixtures shared by the benchmarks: a planted timeline and stores
//! trained just enough to have realistic scores.

use dynakge::datasets::{
    planted_graph, synthetic_snapshots, PlantedConfig, SplitAssignment, SyntheticConfig,
    FB15K_PROPORTIONS,
};
use dynakge::models::init_parameters;
use dynakge::{rng_from_seed, EmbeddingStore, ModelKind, ModelSpec, Snapshot};

/// Two consecutive snapshots of a planted graph with `triples` facts.
pub fn timeline(triples: usize) -> (Snapshot, Snapshot) {
    let mut rng = rng_from_seed(42);
    let cfg = PlantedConfig {
        entities: (triples / 12).max(60),
        triples,
        ..PlantedConfig::default()
    };
    let (base, _) = planted_graph(&cfg, &mut rng).expect("planted graph");
    let mut assign = SplitAssignment::new(FB15K_PROPORTIONS).expect("proportions");
    let synth = SyntheticConfig {
        snapshots: 2,
        entity_keep: 0.98,
        relation_keep: 0.92,
        ..SyntheticConfig::default()
    };
    let mut snaps = synthetic_snapshots(&base, &synth, &mut assign, &mut rng).expect("snapshots");
    let next = snaps.pop().expect("two snapshots");
    (snaps.pop().expect("two snapshots"), next)
}

pub fn spec(kind: ModelKind, dim: usize) -> ModelSpec {
    let mut s = ModelSpec::with_dim(kind, dim);
    if kind == ModelKind::Analogy {
        s.analogy_scalar_dims = dim % 2;
    }
    s
}

pub fn random_store(spec: &ModelSpec, snap: &Snapshot) -> EmbeddingStore {
    init_parameters(spec, snap.vertices(), snap.relations(), 7).expect("store")
}
