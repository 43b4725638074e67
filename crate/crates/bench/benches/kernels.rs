use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qadd_core::channel::{quantum_add, quantum_add_via_kraus, random_sio};
use qadd_core::cqa::{cqa, cqa_objective, ProbabilityVector, Solver, SolverOptions};
use qadd_core::entropy::{relative_entropy, von_neumann_entropy};
use qadd_core::matcore::{matrix_log, random_density};
use qadd_core::verify::run_suite;
use qadd_core::{EnsembleSpec, StateKind, TheoremId};

fn states(d: usize) -> (qadd_core::DensityMatrix, qadd_core::DensityMatrix) {
    (
        random_density(d, StateKind::GinibreMixed, 1).unwrap(),
        random_density(d, StateKind::GinibreMixed, 2).unwrap(),
    )
}

fn linear_algebra(c: &mut Criterion) {
    let mut g = c.benchmark_group("kernels");
    for d in [2usize, 4, 8] {
        let (rho, sigma) = states(d);
        g.bench_with_input(BenchmarkId::new("quantum_add", d), &d, |b, _| {
            b.iter(|| quantum_add(black_box(&rho), black_box(&sigma), 0.3).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("quantum_add_kraus", d), &d, |b, _| {
            b.iter(|| quantum_add_via_kraus(black_box(&rho), black_box(&sigma), 0.3).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("matrix_log", d), &d, |b, _| {
            b.iter(|| matrix_log(black_box(rho.matrix()), 1e-15).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("entropy", d), &d, |b, _| {
            b.iter(|| von_neumann_entropy(black_box(&rho)))
        });
        g.bench_with_input(BenchmarkId::new("relative_entropy", d), &d, |b, _| {
            b.iter(|| relative_entropy(black_box(&rho), black_box(&sigma)).unwrap())
        });
        let ch = random_sio(d, 3, 7).unwrap();
        g.bench_with_input(BenchmarkId::new("sio_apply", d), &d, |b, _| {
            b.iter(|| ch.apply(black_box(&rho)).unwrap())
        });
    }
    g.finish();
}

fn optimisation(c: &mut Criterion) {
    let mut g = c.benchmark_group("cqa");
    g.sample_size(10);
    for d in [2usize, 3, 4] {
        let rho = random_density(d, StateKind::PureHaar, 3).unwrap();
        let q = ProbabilityVector::new((1..=d).map(|k| k as f64 / (d * (d + 1) / 2) as f64).collect()).unwrap();
        g.bench_with_input(BenchmarkId::new("objective", d), &d, |b, _| {
            b.iter(|| cqa_objective(black_box(&rho), black_box(&q), 0.4).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("nelder_mead", d), &d, |b, _| {
            b.iter(|| cqa(black_box(&rho), 0.4, &SolverOptions::new(Solver::NelderMead)).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("multistart", d), &d, |b, _| {
            b.iter(|| cqa(black_box(&rho), 0.4, &SolverOptions::new(Solver::Multistart)).unwrap())
        });
    }
    let qubit = random_density(2, StateKind::PureHaar, 3).unwrap();
    g.bench_function("grid/2", |b| b.iter(|| cqa(black_box(&qubit), 0.4, &SolverOptions::grid(1e-3)).unwrap()));
    g.finish();
}

fn suites(c: &mut Criterion) {
    let mut g = c.benchmark_group("suite");
    g.sample_size(10);
    let spec = EnsembleSpec::new(vec![2, 3], 10, StateKind::GinibreMixed, vec![0.25, 0.5], 11);
    for id in [TheoremId::ReverseEp, TheoremId::Epi, TheoremId::Monotonicity] {
        g.bench_function(id.as_str(), |b| {
            b.iter(|| run_suite(id, black_box(&spec), &SolverOptions::new(Solver::NelderMead)).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, linear_algebra, optimisation, suites);
criterion_main!(benches);
