use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use loggrowth_bench::{d2, draws};
use loggrowth_core::estimators::{psi_naive, psi_paired};
use loggrowth_core::kde::build_kde;
use loggrowth_core::optim::{pg_robbins_monro, plug_and_solve, NewtonOptions, PgConfig, PgMode};
use loggrowth_core::pvcore::{cost_j, hessian_decomposition, pv_gradient, reg_gradient};
use loggrowth_core::DensityModel;

fn oracle(c: &mut Criterion) {
    let st = d2();
    let k = st.reference.kstar + 0.02;
    let mut g = c.benchmark_group("oracle");
    g.bench_function("cost_j", |b| b.iter(|| cost_j(&st.density, black_box(k)).unwrap()));
    g.bench_function("pv_gradient", |b| b.iter(|| pv_gradient(&st.density, black_box(k)).unwrap()));
    g.bench_function("reg_gradient_1e-4", |b| {
        b.iter(|| reg_gradient(&st.density, black_box(k), 1e-4).unwrap())
    });
    g.bench_function("hessian_finite_part", |b| {
        b.iter(|| hessian_decomposition(&st.density, black_box(k), 0.0).unwrap())
    });
    g.finish();
}

fn estimators(c: &mut Criterion) {
    let st = d2();
    let k = st.reference.kstar;
    let xs = draws(&st, 10_000);
    let mut g = c.benchmark_group("estimators_10k");
    g.bench_function("naive", |b| {
        b.iter(|| xs.iter().map(|&x| psi_naive(x, k, 1e-5)).sum::<f64>())
    });
    g.bench_function("paired", |b| {
        b.iter(|| xs.iter().map(|&x| psi_paired(x, k, 1e-5, &st.density).unwrap()).sum::<f64>())
    });
    g.finish();
}

fn kde(c: &mut Criterion) {
    let st = d2();
    let mut g = c.benchmark_group("kde_build");
    g.sample_size(10);
    for n in [1_000usize, 100_000] {
        let xs = draws(&st, n);
        g.bench_with_input(BenchmarkId::from_parameter(n), &xs, |b, xs| {
            b.iter(|| build_kde(xs, 2, 1.0, st.density.support()).unwrap())
        });
    }
    g.finish();
}

fn learners(c: &mut Criterion) {
    let st = d2();
    let mut g = c.benchmark_group("learners");
    g.sample_size(10);
    let cfg = PgConfig::new(PgMode::RobbinsMonro, st.consts, 1.0, st.reference.kstar + 0.05, 1);
    g.bench_function("robbins_monro_1e4", |b| {
        b.iter(|| pg_robbins_monro(&st.density, 10_000, &cfg).unwrap())
    });
    g.bench_function("plug_and_solve_exact", |b| {
        b.iter(|| {
            plug_and_solve(&st.density, st.reference.kstar + 0.05, st.consts.basin(), &NewtonOptions::default())
                .unwrap()
        })
    });
    g.finish();
}

criterion_group!(benches, oracle, estimators, kde, learners);
criterion_main!(benches);
