use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dslab_bench::{analysis, symbol, LAMBDA, PHI1, PHI2};
use dslab_core::approx::{boundary_regularity, compactness_index, lower_bound_witness, WitnessConfig};
use dslab_core::carleson::{kappa_fit, FitConfig};
use dslab_core::classify::analyze;
use dslab_core::flat::{build_flat_polynomial, flat_power_target, SolveMode};
use dslab_core::genset::{complex_dimension, SearchConfig};
use dslab_core::keylemma::grid_sweep;
use dslab_core::lift::BoundaryConfig;
use std::hint::black_box;

fn classification(c: &mut Criterion) {
    let mut g = c.benchmark_group("analyze");
    for (name, text) in [("phi1", PHI1), ("phi2", PHI2), ("lambda", LAMBDA)] {
        let s = symbol(text);
        g.bench_with_input(BenchmarkId::from_parameter(name), &s, |b, s| {
            b.iter(|| analyze(black_box(s), &SearchConfig::default(), &BoundaryConfig::default()).unwrap())
        });
    }
    g.finish();
    c.bench_function("complex_dimension/36,144,324,1296", |b| {
        b.iter(|| complex_dimension(black_box(&[36, 144, 324, 1296]), &SearchConfig::default()).unwrap())
    });
}

fn carleson(c: &mut Criterion) {
    let lift = analysis(PHI1).lift;
    let mut g = c.benchmark_group("kappa_fit");
    g.sample_size(10);
    for samples in [20_000usize, 100_000] {
        let cfg = FitConfig { samples, ..Default::default() };
        g.bench_with_input(BenchmarkId::new("phi1", samples), &cfg, |b, cfg| b.iter(|| kappa_fit(&lift, cfg).unwrap()));
    }
    g.finish();
}

fn constructions(c: &mut Criterion) {
    let mut g = c.benchmark_group("flat_exact");
    for k in [2u32, 6, 12] {
        let target = flat_power_target(k, None).unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(k), &target, |b, t| b.iter(|| build_flat_polynomial(t, SolveMode::Exact).unwrap()));
    }
    g.finish();
    c.bench_function("keylemma/grid_5x5", |b| b.iter(|| grid_sweep(5, 5).unwrap()));
}

fn approximation(c: &mut Criterion) {
    let a = analysis(PHI2);
    c.bench_function("compactness_index/phi2", |b| b.iter(|| compactness_index(&a.lift, &BoundaryConfig::default()).unwrap()));
    let w = &a.scan.as_ref().unwrap().points[0];
    let profile = boundary_regularity(&a.lift, w).unwrap();
    c.bench_function("witness/phi2_delta_1e-3", |b| {
        b.iter(|| lower_bound_witness(&a.lift, &profile, 1e-3, 8.0, &WitnessConfig::default()).unwrap())
    });
}

criterion_group!(benches, classification, carleson, constructions, approximation);
criterion_main!(benches);
