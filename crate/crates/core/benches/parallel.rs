//! One worker thread versus the default rayon pool on the parallel hot spots.
//! Build with `--no-default-features` to compare against the sequential
//! fallback instead (this bench requires the `parallel` feature).

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use felt_core::bootstrap::bootstrap;
use felt_core::pipeline::{fit, sweep, PipelineConfig, SummaryStatistic};
use felt_core::sieve_gmm::{build_moments, Weighting};
use felt_core::synth::{generate, DgpConfig};
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(String, ThreadPool)> {
    let default = rayon::current_num_threads();
    let mut out = vec![(
        "1".to_string(),
        ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
    )];
    if default > 1 {
        out.push((
            default.to_string(),
            ThreadPoolBuilder::new()
                .num_threads(default)
                .build()
                .unwrap(),
        ));
    }
    out
}

fn moments(c: &mut Criterion) {
    let sim = generate(&DgpConfig::dgp_s(20_000, 1)).unwrap();
    let mut g = c.benchmark_group("build_moments_n20000_K8");
    for (label, pool) in pools() {
        g.bench_function(BenchmarkId::new("threads", label), |b| {
            pool.install(|| {
                b.iter(|| black_box(build_moments(&sim.panel, 8, Weighting::Identity).unwrap()))
            })
        });
    }
    g.finish();
}

fn sweep_orders(c: &mut Criterion) {
    let sim = generate(&DgpConfig::dgp_s(3000, 2)).unwrap();
    let degrees: Vec<usize> = (1..=8).collect();
    let mut g = c.benchmark_group("sweep_n3000_K1to8");
    g.sample_size(10);
    for (label, pool) in pools() {
        g.bench_function(BenchmarkId::new("threads", label), |b| {
            pool.install(|| b.iter(|| black_box(sweep(&sim.panel, &degrees, Weighting::Identity))))
        });
    }
    g.finish();
}

fn bootstrap_summary(c: &mut Criterion) {
    let sim = generate(&DgpConfig::dgp_s(1000, 3)).unwrap();
    let cfg = PipelineConfig {
        degree: 6,
        ..Default::default()
    };
    let stat = SummaryStatistic::new(cfg, &fit(&sim.panel, &cfg).unwrap());
    let mut g = c.benchmark_group("bootstrap_n1000_B16");
    g.sample_size(10);
    for (label, pool) in pools() {
        g.bench_function(BenchmarkId::new("threads", label), |b| {
            pool.install(|| b.iter(|| black_box(bootstrap(&sim.panel, &stat, 16, 0).unwrap())))
        });
    }
    g.finish();
}

criterion_group!(benches, moments, sweep_orders, bootstrap_summary);
criterion_main!(benches);
