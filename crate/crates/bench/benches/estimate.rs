use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use satpart::cnf::random_k_cnf;
use satpart::orchestrator::evaluate_parallel;
use satpart::solver::CostMetric;
use satpart::{draw_sample, estimate, CdclConfig, CdclSolver, DecompositionSet, EstimateOptions};

fn sequential(c: &mut Criterion) {
    let f = random_k_cnf(50, 200, 3, 5);
    let set = DecompositionSet::new((1..=10).collect()).unwrap();
    let opts = EstimateOptions::with_metric(CostMetric::Propagations);
    let mut group = c.benchmark_group("estimate_sequential");
    for n in [32usize, 128] {
        let plan = draw_sample(&set, n, 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &plan, |b, plan| {
            let mut s = CdclSolver::default();
            b.iter(|| estimate(&f, plan, &mut s, &opts).unwrap())
        });
    }
    group.finish();
}

fn pooled(c: &mut Criterion) {
    let f = random_k_cnf(50, 200, 3, 5);
    let set = DecompositionSet::new((1..=10).collect()).unwrap();
    let opts = EstimateOptions::with_metric(CostMetric::Propagations);
    let plan = draw_sample(&set, 128, 1).unwrap();
    let mut group = c.benchmark_group("estimate_pool");
    for workers in [1usize, 2, 4] {
        group.bench_with_input(BenchmarkId::from_parameter(workers), &workers, |b, &w| {
            b.iter(|| evaluate_parallel(&f, &plan, &CdclConfig::default(), w, &opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sequential, pooled);
criterion_main!(benches);
