//! Benchmarks for the accounting hot paths: single-release profile
//! evaluation, T-fold loss-grid composition, the composed ε⁻¹ lookup, the
//! budget/rate allocator, and the sampling-rate planner.

use brdp_core::{
    allocate, brdp_privacy_profile, calibrate_kernel, epsilon_at_delta, find_p, BrdpMechanism,
    BudgetPair, ComposedBrdpProfile, ComposedKernelProfile, ErrorBound, KernelKind, ObjectiveMode,
    PopulationModel, QueryKind,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

const KINDS: [KernelKind; 2] = [KernelKind::Gaussian, KernelKind::Laplacian];

fn kind_label(kind: KernelKind) -> &'static str {
    match kind {
        KernelKind::Gaussian => "gaussian",
        KernelKind::Laplacian => "laplace",
    }
}

fn release_mechanism(kind: KernelKind) -> BrdpMechanism {
    let budget = BudgetPair::new(1.0, 1e-5).unwrap();
    let kernel = calibrate_kernel(kind, &budget, 1.0).unwrap();
    BrdpMechanism::new(kernel, 0.3, ErrorBound::new(1.0).unwrap()).unwrap()
}

// ---------------------------------------------------------------------------
// Single-release profiles
// ---------------------------------------------------------------------------

fn bench_profiles(c: &mut Criterion) {
    let mut group = c.benchmark_group("profile");
    for kind in KINDS {
        let budget = BudgetPair::new(1.0, 1e-5).unwrap();
        let kernel = calibrate_kernel(kind, &budget, 1.0).unwrap();
        let mech = release_mechanism(kind);
        group.bench_with_input(BenchmarkId::new("kernel", kind_label(kind)), &kernel, |b, k| {
            b.iter(|| black_box(k.privacy_profile(black_box(0.8))));
        });
        group.bench_with_input(BenchmarkId::new("release", kind_label(kind)), &mech, |b, m| {
            b.iter(|| black_box(brdp_privacy_profile(black_box(m), black_box(0.8))));
        });
    }
    group.finish();
}

// ---------------------------------------------------------------------------
// T-fold composition
// ---------------------------------------------------------------------------

fn bench_composition(c: &mut Criterion) {
    let mut group = c.benchmark_group("compose");
    group.sample_size(20);
    let budget = BudgetPair::new(0.1, 1e-6).unwrap();
    let kernel = calibrate_kernel(KernelKind::Gaussian, &budget, 1.0).unwrap();
    for t in [10u32, 100, 1000] {
        group.bench_with_input(BenchmarkId::new("kernel", t), &t, |b, &t| {
            b.iter(|| black_box(ComposedKernelProfile::new(black_box(&kernel), t).unwrap()));
        });
    }
    let mech = BrdpMechanism::new(kernel.clone(), 0.3, ErrorBound::new(1.0).unwrap()).unwrap();
    group.bench_function("release/100", |b| {
        b.iter(|| black_box(ComposedBrdpProfile::new(black_box(&mech), 100).unwrap()));
    });
    group.finish();
}

fn bench_epsilon_lookup(c: &mut Criterion) {
    let budget = BudgetPair::new(0.1, 1e-6).unwrap();
    let kernel = calibrate_kernel(KernelKind::Gaussian, &budget, 1.0).unwrap();
    let profile = ComposedKernelProfile::new(&kernel, 100).unwrap();
    c.bench_function("epsilon_at_delta/100", |b| {
        b.iter(|| {
            black_box(
                epsilon_at_delta(|e| profile.delta_at(e), black_box(1e-5), 1e-6).unwrap(),
            )
        });
    });
}

// ---------------------------------------------------------------------------
// Planning
// ---------------------------------------------------------------------------

fn bench_allocate(c: &mut Criterion) {
    let mut group = c.benchmark_group("allocate");
    group.sample_size(10);
    let budget = BudgetPair::new(1.0, 1e-5).unwrap();
    for kind in KINDS {
        group.bench_with_input(BenchmarkId::from_parameter(kind_label(kind)), &kind, |b, &kind| {
            b.iter(|| {
                black_box(
                    allocate(kind, &budget, 1.0, 1.0, 1e-4, ObjectiveMode::default()).unwrap(),
                )
            });
        });
    }
    group.finish();
}

fn bench_find_p(c: &mut Criterion) {
    let mut group = c.benchmark_group("find_p");
    group.sample_size(10);
    let budget = BudgetPair::new(1.0, 1e-5).unwrap();
    let pop = PopulationModel::new(10_000, 0.0, 10.0, 0.1).unwrap();
    group.bench_function("gaussian/count", |b| {
        b.iter(|| {
            black_box(
                find_p(
                    KernelKind::Gaussian,
                    &budget,
                    1.0,
                    3.0,
                    QueryKind::Count,
                    &pop,
                    1e-4,
                    ObjectiveMode::default(),
                )
                .unwrap(),
            )
        });
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_profiles,
    bench_composition,
    bench_epsilon_lookup,
    bench_allocate,
    bench_find_p
);
criterion_main!(benches);
