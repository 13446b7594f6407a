use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use satpart::cipher::{encode, make_weakened, reference_keystream, Family};
use satpart::cnf::random_k_cnf;
use satpart::solver::SolveLimits;
use satpart::{Assignment, CdclSolver, Solver};

fn random_3sat(c: &mut Criterion) {
    let mut group = c.benchmark_group("cdcl_random_3sat");
    for n in [40u32, 60, 80] {
        let f = random_k_cnf(n, (n as f64 * 4.26) as usize, 3, u64::from(n));
        group.bench_with_input(BenchmarkId::from_parameter(n), &f, |b, f| {
            let mut s = CdclSolver::default();
            b.iter(|| s.solve(f, &Assignment::empty(), &SolveLimits::none()).unwrap())
        });
    }
    group.finish();
}

fn a51_mini(c: &mut Criterion) {
    let spec = make_weakened(Family::A51, &[5, 6, 7], 14).unwrap();
    let state: Vec<bool> = (0..18).map(|i| i % 3 == 0).collect();
    let inst = encode(&spec, &reference_keystream(&spec, &state).unwrap()).unwrap();
    let half = Assignment::new((1..=9).map(|v| (v, state[v as usize - 1])).collect()).unwrap();
    let mut group = c.benchmark_group("cdcl_a51_mini");
    group.bench_function("half_state_assumed", |b| {
        let mut s = CdclSolver::default();
        b.iter(|| s.solve(&inst.cnf, &half, &SolveLimits::none()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, random_3sat, a51_mini);
criterion_main!(benches);
