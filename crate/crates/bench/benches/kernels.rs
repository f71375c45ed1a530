use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use fracheat_core::envelopes::free_kernel_exact_1d;
use fracheat_core::profiles::{make_profile, ProfileKind};
use fracheat_core::spectral::SpectralModel;
use fracheat_core::stable_sim::{estimate_kernel, Potential, SimConfig};
use fracheat_core::thresholds::fit_threshold_model;
use fracheat_core::{geometric_grid, solve_t0};

fn thresholds(c: &mut Criterion) {
    let profile = make_profile(ProfileKind::Log { beta: 2.0 }, 1).unwrap();
    c.bench_function("solve_t0/log2", |b| {
        b.iter(|| solve_t0(&profile, 1.0, black_box(37.0), 1e-12).unwrap())
    });
    let grid: Vec<f64> = std::iter::once(0.0).chain(geometric_grid(1e-2, 1e3, 63)).collect();
    c.bench_function("threshold_model/64", |b| {
        b.iter(|| fit_threshold_model(&profile, 1.0, black_box(&grid)).unwrap())
    });
}

fn free_kernel(c: &mut Criterion) {
    c.bench_function("free_kernel_exact_1d/alpha1.5", |b| {
        b.iter(|| free_kernel_exact_1d(black_box(0.7), black_box(3.0), 1.5).unwrap())
    });
}

fn spectral(c: &mut Criterion) {
    let profile = make_profile(ProfileKind::Power { p: 2.0 }, 1).unwrap();
    let mut group = c.benchmark_group("spectral");
    group.sample_size(10);
    group.bench_function("build/N256", |b| {
        b.iter(|| SpectralModel::build(20.0, black_box(256), 256, 1.0, &profile).unwrap())
    });
    let model = SpectralModel::build(20.0, 256, 256, 1.0, &profile).unwrap();
    group.bench_function("kernel/N256", |b| b.iter(|| model.kernel(black_box(0.5), 100, 140)));
    group.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let profile = make_profile(ProfileKind::Power { p: 2.0 }, 1).unwrap();
    let cfg = SimConfig {
        n_paths: 2_000,
        n_steps: 50,
        ..SimConfig::new(1.0, 1, Potential::Profile(profile))
    };
    let mut group = c.benchmark_group("monte_carlo");
    group.sample_size(10);
    group.bench_function("kernel/2000x50", |b| {
        b.iter(|| estimate_kernel(&[0.0], &[1.0], black_box(0.5), &cfg).unwrap())
    });
    group.finish();
}

criterion_group!(benches, thresholds, free_kernel, spectral, monte_carlo);
criterion_main!(benches);
