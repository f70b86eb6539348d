use std::hint::black_box;

use cfx_bench::fixture;
use cfx_core::explain::model_free_bound;
use cfx_core::lp::{solve_lp, BranchOptions, LpProblem, RowSense};
use cfx_core::{explain, solve_factual_enumerate, solve_factual_haase, wasserstein2, GroundCost, SolverConfig};
use criterion::{criterion_group, criterion_main, Criterion};

fn transport(c: &mut Criterion) {
    let f = fixture(20, 6, 3, 2, 1);
    let ground = GroundCost::from_precomputed(&f.pre);
    let (p, q) = (&f.factual.p0[0], &f.factual.p0[1]);
    c.bench_function("wasserstein2 9x9", |b| b.iter(|| wasserstein2(black_box(p), black_box(q), &ground).unwrap()));
}

fn lp(c: &mut Criterion) {
    // dense covering LP with a deterministic pseudo-random matrix
    let (m, n) = (20, 40);
    let mut lp = LpProblem::new();
    let coef = |i: usize, j: usize| ((i * 31 + j * 17) % 23) as f64 / 23.0 + 0.05;
    let vars: Vec<usize> = (0..n).map(|j| lp.add_var(1.0 + (j % 7) as f64, 0.0, 10.0)).collect();
    for i in 0..m {
        let row: Vec<(usize, f64)> = vars.iter().map(|&j| (j, coef(i, j))).collect();
        lp.add_row(&row, RowSense::Ge, 5.0 + (i % 5) as f64);
    }
    c.bench_function("simplex 20x40", |b| b.iter(|| solve_lp(black_box(&lp)).unwrap()));
}

fn factual(c: &mut Criterion) {
    let f = fixture(50, 8, 5, 2, 2);
    let mut g = c.benchmark_group("factual N50 D8 r2");
    g.sample_size(20);
    g.bench_function("enumerate", |b| b.iter(|| solve_factual_enumerate(&f.pre, 2).unwrap()));
    g.bench_function("haase", |b| b.iter(|| solve_factual_haase(&f.pre, 2, &BranchOptions::default()).unwrap()));
    g.finish();
}

fn explanation(c: &mut Criterion) {
    let f = fixture(20, 6, 3, 2, 3);
    let mut g = c.benchmark_group("explain N20 D6 r2");
    g.sample_size(10);
    for lambda in [0.0, 0.1] {
        let cfg = SolverConfig { multistarts: 3, max_iterations: 500, ..SolverConfig::new(1.0, lambda, 2) };
        g.bench_function(format!("lambda {lambda}"), |b| {
            b.iter(|| explain(&f.pre, &f.factual, &f.desired, &cfg).unwrap())
        });
    }
    let cfg = SolverConfig::new(1.0, 0.1, 2);
    g.bench_function("model-free bound", |b| {
        b.iter(|| model_free_bound(&f.pre, &f.factual, &f.desired, &cfg, None).unwrap())
    });
    g.finish();
}

criterion_group!(benches, transport, lp, factual, explanation);
criterion_main!(benches);
