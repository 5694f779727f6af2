use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use amcs_core::clustering::kmeans_init;
use amcs_core::estimation::{
    estimate_node, fixed_budget_estimate, wilson_delta, EstimatorConfig,
};
use amcs_core::rollout::{Problem, SimNodeSpec, SimSource};

fn bench_wilson(c: &mut Criterion) {
    c.bench_function("wilson_delta", |b| {
        b.iter(|| {
            let mut total = 0.0;
            for n in 1..64u64 {
                total += wilson_delta(black_box(n / 2), black_box(n), black_box(1.96));
            }
            total
        })
    });
}

fn bench_kmeans(c: &mut Criterion) {
    let points: Vec<[f64; 2]> = (0..100)
        .map(|i| {
            let x = (i % 10) as f64 / 3.0;
            let y = (i / 10) as f64 / 7.0;
            [x, y]
        })
        .collect();
    c.bench_function("kmeans_init_100pts_k3", |b| {
        b.iter(|| kmeans_init(black_box(&points), 3, 42).unwrap())
    });
}

fn bench_estimators(c: &mut Criterion) {
    let problem = Problem::new("bench-1", "a benchmark problem statement here", "1").unwrap();
    let source = SimSource::single(SimNodeSpec::varied(0.5)).unwrap();
    let cfg = EstimatorConfig::default();
    c.bench_function("estimate_node_default", |b| {
        b.iter(|| estimate_node(&[], &problem, &source, &cfg, black_box(7)).unwrap())
    });
    c.bench_function("fixed_budget_16", |b| {
        b.iter(|| fixed_budget_estimate(&[], &problem, &source, 16, black_box(7)).unwrap())
    });
}

criterion_group!(benches, bench_wilson, bench_kmeans, bench_estimators);
criterion_main!(benches);
