use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use dynakge::dyninit::init_order;
use dynakge::eval::{link_prediction, DEFAULT_KS};
use dynakge::models::score;
use dynakge::training::{run_epoch_general, OptimizerState, TrainConfig};
use dynakge::{derive_rng, diff_snapshots, Counters, ModelKind, TripleSet};
use dynakge_bench::{random_store, spec, timeline};

fn scores(c: &mut Criterion) {
    let (snap, _) = timeline(2000);
    let mut group = c.benchmark_group("score");
    for kind in ModelKind::ALL {
        let s = spec(kind, 50);
        let store = random_store(&s, &snap);
        let triples: Vec<_> = snap.train.iter().take(256).copied().collect();
        let counters = Counters::new();
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| {
                triples
                    .iter()
                    .map(|t| score(&s, &store, t, &counters).unwrap())
                    .sum::<f64>()
            })
        });
    }
    group.finish();
}

fn general_epoch(c: &mut Criterion) {
    let (snap, _) = timeline(5000);
    let mut group = c.benchmark_group("general_epoch");
    group.sample_size(10);
    for kind in [ModelKind::TransE, ModelKind::DistMult, ModelKind::Rescal] {
        let s = spec(kind, 50);
        let store = random_store(&s, &snap);
        let mut cfg = TrainConfig::for_model(kind);
        cfg.num_batch = 10;
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter_batched(
                || {
                    (
                        store.clone(),
                        OptimizerState::new(cfg.optimizer, &s.layout()),
                        derive_rng(1, 0),
                    )
                },
                |(mut st, mut opt, mut rng)| {
                    run_epoch_general(
                        &mut st,
                        &snap,
                        &s,
                        &cfg,
                        &mut opt,
                        cfg.learning_rate,
                        &mut rng,
                        &Counters::new(),
                    )
                    .unwrap()
                },
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

fn link_prediction_bench(c: &mut Criterion) {
    let (snap, _) = timeline(5000);
    let mut group = c.benchmark_group("link_prediction");
    group.sample_size(10);
    let test: TripleSet = snap.test.iter().take(100).copied().collect();
    for kind in [ModelKind::TransE, ModelKind::TransH, ModelKind::DistMult] {
        let s = spec(kind, 50);
        let store = random_store(&s, &snap);
        group.bench_function(BenchmarkId::from_parameter(kind), |b| {
            b.iter(|| {
                link_prediction(&s, &store, &snap, &test, &DEFAULT_KS, &Counters::new())
                    .unwrap()
                    .mrr
            })
        });
    }
    group.finish();
}

fn init_order_bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("init_order");
    for triples in [2000, 10000] {
        let (prev, next) = timeline(triples);
        let cs = diff_snapshots(&prev, &next).unwrap();
        group.bench_function(BenchmarkId::from_parameter(triples), |b| {
            b.iter(|| init_order(&next.train, &cs.added_vertices, &cs.added_relations, 1.0).len())
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    scores,
    general_epoch,
    link_prediction_bench,
    init_order_bench
);
criterion_main!(benches);
