use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hitmdp::policy::{evaluate_policy, EvalMethod};
use hitmdp::solver::{bellman_apply, value_iteration};
use hitmdp::weight::WeightCertificate;
use hitmdp::{StationaryPolicy, ValueFunction};
use hitmdp_bench::sized_model;

fn bench_bellman_backup(c: &mut Criterion) {
    let mut group = c.benchmark_group("bellman_backup");
    for n in [50, 200, 800] {
        let model = sized_model(n);
        let u = ValueFunction::zeros(model.nontarget_count());
        group.bench_with_input(BenchmarkId::from_parameter(n), &model, |b, model| {
            b.iter(|| bellman_apply(black_box(model), black_box(&u)))
        });
    }
    group.finish();
}

fn bench_value_iteration(c: &mut Criterion) {
    let mut group = c.benchmark_group("value_iteration_tol_1e-6");
    group.sample_size(20);
    for n in [50, 200] {
        let model = sized_model(n);
        let cert = WeightCertificate::unit(&model).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &model, |b, model| {
            b.iter(|| value_iteration(black_box(model), &cert, 1e-6, 1_000_000).unwrap())
        });
    }
    group.finish();
}

fn bench_policy_evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("policy_evaluation");
    group.sample_size(20);
    let model = sized_model(200);
    let policy = StationaryPolicy::lowest(&model);
    group.bench_function("exact_200", |b| {
        b.iter(|| evaluate_policy(black_box(&model), &policy, EvalMethod::Exact).unwrap())
    });
    group.bench_function("iterative_200", |b| {
        b.iter(|| {
            evaluate_policy(
                black_box(&model),
                &policy,
                EvalMethod::Iterative {
                    tolerance: 1e-9,
                    max_iter: 1_000_000,
                },
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_bellman_backup,
    bench_value_iteration,
    bench_policy_evaluation
);
criterion_main!(benches);
