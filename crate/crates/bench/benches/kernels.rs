use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sgp_bench::{bump, context, unit_problem};
use sgp_core::energy::{estimate_embedding_k, estimate_rp};
use sgp_core::fibering::compute_constants;
use sgp_core::functional::{euler_gradient, Exponents};
use sgp_core::solver::{solve_system, SolverConfig};
use sgp_core::ApModel;

fn energy(c: &mut Criterion) {
    for p in [2.0, 3.0] {
        let ctx = context(7, p);
        let u = bump(ctx.graph());
        c.bench_function(&format!("energy_gradient_level7_p{p}"), |b| {
            b.iter(|| ctx.energy_gradient(black_box(&u)).unwrap())
        });
    }
    let ctx = context(6, 2.0);
    let spec = unit_problem(6, Exponents::standard(), 0.5);
    let u = bump(ctx.graph());
    c.bench_function("euler_gradient_level6_p2", |b| {
        b.iter(|| euler_gradient(&spec, &ctx, black_box(&u), black_box(&u)).unwrap())
    });
}

fn setup(c: &mut Criterion) {
    let m3 = ApModel::new(3.0).unwrap();
    c.bench_function("estimate_rp_p3_level5", |b| {
        b.iter(|| estimate_rp(&m3, 5, 1e-12).unwrap())
    });
    let ctx = context(4, 3.0);
    c.bench_function("embedding_k_level4_p3", |b| {
        b.iter(|| estimate_embedding_k(&ctx).unwrap())
    });
}

fn solve(c: &mut Criterion) {
    let ctx = context(4, 2.0);
    let base = unit_problem(4, Exponents::standard(), 0.0);
    let k = compute_constants(&base, &ctx).unwrap();
    let t = 0.6 * k.kappa0 / (k.a_l1 + k.b_l1);
    let spec = base.with_parameters(t, t);
    let constants = compute_constants(&spec, &ctx).unwrap();
    let cfg = SolverConfig {
        starts: 4,
        ..Default::default()
    };
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    group.bench_function("both_branches_level4_p2", |b| {
        b.iter(|| solve_system(&spec, &ctx, &constants, &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, energy, setup, solve);
criterion_main!(benches);
