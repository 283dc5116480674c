//! Micro-benchmarks for the per-iteration hot paths: the momentum recursion,
//! the normalized step, minibatch oracle means, and a complete estimator
//! advance on the desk-scale portfolio problem.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion, Throughput};
use nalgebra::{DMatrix, DVector};
use stormc_core::estimators::{
    advance_state, init_state_with_batches, storm_recursion_mat, storm_recursion_vec,
};
use stormc_core::eval::{minibatch_g, minibatch_grad_f, minibatch_jacobian};
use stormc_core::optimizer::normalized_step;
use stormc_core::problems::Portfolio;
use stormc_core::{
    run_storm_c, CompositionalProblem, HyperParams, InitBatches, MomentumWeights, RandomSource,
    RunOptions, StepBatches,
};

fn bench_recursion(c: &mut Criterion) {
    let dim = 64;
    let prev = DVector::from_fn(dim, |i, _| (i as f64).sin());
    let at_new = DVector::from_fn(dim, |i, _| (i as f64 * 0.7).cos());
    let at_old = DVector::from_fn(dim, |i, _| (i as f64 * 1.3).sin());
    let mut group = c.benchmark_group("recursion");
    group.bench_function("vector_64", |b| {
        b.iter(|| {
            storm_recursion_vec(black_box(&prev), black_box(&at_new), black_box(&at_old), 0.1)
                .unwrap()
        })
    });

    let (rows, cols) = (32, 64);
    let prev_m = DMatrix::from_fn(rows, cols, |i, j| ((i * cols + j) as f64).sin());
    let new_m = DMatrix::from_fn(rows, cols, |i, j| ((i + 2 * j) as f64).cos());
    let old_m = DMatrix::from_fn(rows, cols, |i, j| ((3 * i + j) as f64).sin());
    group.bench_function("matrix_32x64", |b| {
        b.iter(|| {
            storm_recursion_mat(black_box(&prev_m), black_box(&new_m), black_box(&old_m), 0.1)
                .unwrap()
        })
    });
    group.finish();
}

fn bench_normalized_step(c: &mut Criterion) {
    let dim = 64;
    let x = DVector::from_fn(dim, |i, _| 0.1 * i as f64);
    let grad = DVector::from_fn(dim, |i, _| ((i as f64) * 0.3).cos());
    c.bench_function("normalized_step_64", |b| {
        b.iter(|| normalized_step(black_box(&x), black_box(&grad), 0.5, 0.1).unwrap())
    });
}

fn bench_portfolio(c: &mut Criterion) {
    let mut rng = RandomSource::from_seed(0);
    let problem = Portfolio::generate(200, 20, 4.0, &mut rng).unwrap();
    let x = problem.initial_point();
    let batch_size = 100;
    let batch_inner = rng.sample_batch(problem.inner_count(), batch_size).unwrap();
    let batch_outer = rng.sample_batch(problem.outer_count(), batch_size).unwrap();

    let mut group = c.benchmark_group("portfolio_200x20");
    group.throughput(Throughput::Elements(batch_size as u64));
    group.bench_function("minibatch_value", |b| {
        b.iter(|| minibatch_g(black_box(&problem), black_box(&x), &batch_inner).unwrap())
    });
    group.bench_function("minibatch_jacobian", |b| {
        b.iter(|| minibatch_jacobian(black_box(&problem), black_box(&x), &batch_inner).unwrap())
    });
    let y = minibatch_g(&problem, &x, &batch_inner).unwrap();
    group.bench_function("minibatch_outer_gradient", |b| {
        b.iter(|| minibatch_grad_f(black_box(&problem), black_box(&y), &batch_outer).unwrap())
    });

    let state =
        init_state_with_batches(&problem, &x, &batch_inner, &batch_inner, &batch_outer).unwrap();
    let x_next = &x + DVector::from_element(x.len(), 1e-3);
    let weights = MomentumWeights::uniform(0.01);
    group.throughput(Throughput::Elements(3 * batch_size as u64));
    group.bench_function("advance_state", |b| {
        b.iter(|| {
            advance_state(
                black_box(&problem),
                black_box(&state),
                &x_next,
                &x,
                &batch_inner,
                &batch_inner,
                &batch_outer,
                weights,
            )
            .unwrap()
        })
    });
    group.finish();
}

fn bench_optimizer_run(c: &mut Criterion) {
    let mut rng = RandomSource::from_seed(0);
    let problem = Portfolio::generate(200, 20, 4.0, &mut rng).unwrap();
    let hyper = HyperParams {
        eta: 0.1,
        eps: 0.1,
        weights: MomentumWeights::uniform(0.01),
        init: InitBatches::uniform(32),
        steps: StepBatches::uniform(32),
        t_iters: 32,
    };
    let options = RunOptions {
        estimation_errors: false,
        ..RunOptions::default()
    };
    c.bench_function("optimizer_run_T32_B32", |b| {
        b.iter(|| run_storm_c(black_box(&problem), &hyper, 7, None, &options).unwrap())
    });
}

criterion_group!(
    benches,
    bench_recursion,
    bench_normalized_step,
    bench_portfolio,
    bench_optimizer_run
);
criterion_main!(benches);
