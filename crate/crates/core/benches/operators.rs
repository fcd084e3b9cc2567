//! One Bellman sweep on a single-worker rayon pool against the default pool.
//! Build with `--no-default-features` for the plain sequential path.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use netbellman::dp::BellmanOperator;
use netbellman::general::apply;
use netbellman::network::NetworkOperator;
use netbellman::presets::reference_network;
use netbellman::{Grid, Interpolation, LossSpec, PowerLoss};
use rayon::ThreadPoolBuilder;

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = ThreadPoolBuilder::new().build().unwrap();
    let label = format!("{}-threads", default.current_num_threads());
    vec![
        (
            "1-thread".to_string(),
            ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        (label, default),
    ]
}

fn bellman_sweep(c: &mut Criterion) {
    let spec = LossSpec::power(PowerLoss::new(0.0, 1.0, 2.0).unwrap(), 1.2, 1.0).unwrap();
    let grid = Arc::new(Grid::uniform(1.0, 1001).unwrap());
    let op = BellmanOperator::new(&spec, grid);
    let w = op.apply(&op.upper_bound()).unwrap();
    let mut group = c.benchmark_group("bellman_sweep_n1001");
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| pool.install(|| op.apply(&w).unwrap()))
        });
    }
    group.finish();
}

fn network_sweep(c: &mut Criterion) {
    let spec = reference_network(0.2).unwrap();
    let op = NetworkOperator::new(&spec, Arc::new(Grid::uniform(1.0, 401).unwrap())).unwrap();
    let w = apply(&op, &op.upper_bound(Interpolation::Linear));
    let mut group = c.benchmark_group("network_sweep_n401");
    group.sample_size(20);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(label), |b| {
            b.iter(|| pool.install(|| apply(&op, &w)))
        });
    }
    group.finish();
}

criterion_group!(benches, bellman_sweep, network_sweep);
criterion_main!(benches);
