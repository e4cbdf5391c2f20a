use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use aosim_core::diagnostics::{verify_chain_bound, verify_fast_bound, BadPathSchedule, ChainBoundSetup, FastBoundSetup};
use aosim_core::geometry::{Container, Metric, MonteCarloUnion, PointSet, SimulationDomain, TwoTypeConfiguration};
use aosim_core::par::Execution;

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn brownian_paths(c: &mut Criterion) {
    let mut g = c.benchmark_group("brownian_oscillation");
    g.sample_size(10);
    for (name, exec) in MODES {
        let setup = FastBoundSetup {
            paths: 2_000,
            seed: 1,
            exec,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &setup, |b, s| b.iter(|| verify_fast_bound(s).unwrap()));
    }
    g.finish();
}

fn chain_replicas(c: &mut Criterion) {
    let dom = SimulationDomain::new(
        2,
        0.5,
        0.075,
        1.0,
        Container::Ball {
            radius: 2.0,
            exterior: TwoTypeConfiguration::empty(2),
        },
    )
    .unwrap();
    let schedule = BadPathSchedule::new(2.0, 0.1, 0.5).unwrap();
    let mut g = c.benchmark_group("chain_bound");
    g.sample_size(10);
    for (name, exec) in MODES {
        let setup = ChainBoundSetup {
            replicas: 500,
            burn_in: 1_000,
            seed: 1,
            exec,
            ..Default::default()
        };
        g.bench_with_input(BenchmarkId::from_parameter(name), &setup, |b, s| {
            b.iter(|| verify_chain_bound(&dom, 0.1, 1.0, &schedule, s).unwrap())
        });
    }
    g.finish();
}

fn union_volume(c: &mut Criterion) {
    let pts: Vec<[f64; 3]> = (0..8).map(|i| [0.9 * i as f64, 0.3 * (i % 3) as f64, 0.0]).collect();
    let points = PointSet::from_points(3, &pts).unwrap();
    let metric = Metric::Euclidean;
    let mut g = c.benchmark_group("union_volume");
    g.sample_size(10);
    for (name, exec) in MODES {
        let mc = MonteCarloUnion::bounding(&points, &metric, 0.575, 200_000, 1).with_execution(exec);
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| mc.estimate(&points, &metric, 0.575)));
    }
    g.finish();
}

criterion_group!(benches, brownian_paths, chain_replicas, union_volume);
criterion_main!(benches);
