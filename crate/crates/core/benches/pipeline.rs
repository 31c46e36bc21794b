//! Parallel vs single-threaded throughput of the heavy stages.
//!
//! `parallel` runs on the global rayon pool and `sequential` inside a
//! one-thread pool. Build with `--no-default-features` to bench the plain
//! iterator fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use gammact::detector::{counts_to_projection, scan, DetectorModel};
use gammact::phantom::{paper_phantom, rasterize, GridSpec};
use gammact::projector::{ideal_sinogram, paper_geometry, FanGeometry};
use gammact::recon::{fbp, hamming_filters, rebin_fan_to_parallel, RebinParams};

fn pools() -> [(&'static str, rayon::ThreadPool); 2] {
    let build = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
    };
    [("parallel", build(0)), ("sequential", build(1))]
}

fn bench_rasterize(c: &mut Criterion) {
    let p = paper_phantom();
    let grid = GridSpec::new(256, 12.0).unwrap();
    let mut g = c.benchmark_group("rasterize_256_ss4");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| rasterize(black_box(&p), grid, 4).unwrap()))
        });
    }
    g.finish();
}

fn bench_scan(c: &mut Criterion) {
    let p = paper_phantom();
    let geom = FanGeometry::with_uniform_views(26.0, 52.0, 30.0, 64, 360).unwrap();
    let model = DetectorModel::default();
    let mut g = c.benchmark_group("scan_360x64_repeats1000");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| scan(black_box(&p), &geom, &model, 1000, 7).unwrap()))
        });
    }
    g.finish();
}

fn bench_fbp(c: &mut Criterion) {
    let counts = scan(
        &paper_phantom(),
        &paper_geometry(),
        &DetectorModel::default(),
        1,
        3,
    )
    .unwrap()
    .counts;
    let projection = counts_to_projection(&counts).unwrap();
    let rebin = RebinParams::default();
    let parallel = rebin_fan_to_parallel(&projection, &rebin.thetas(), &rebin.s_bins()).unwrap();
    let dense = ideal_sinogram(
        &paper_phantom(),
        &FanGeometry::with_uniform_views(26.0, 52.0, 30.0, 64, 360).unwrap(),
    );
    let dense_rebin = RebinParams {
        n_thetas: 180,
        theta_span: 180.0,
        n_s_bins: 128,
        s_max: 6.0,
    };
    let dense_parallel =
        rebin_fan_to_parallel(&dense, &dense_rebin.thetas(), &dense_rebin.s_bins()).unwrap();
    let filter = hamming_filters().remove(4);
    let grid = GridSpec::new(128, 12.0).unwrap();
    let mut g = c.benchmark_group("fbp_128");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new("sparse_36x64", name), |b| {
            b.iter(|| pool.install(|| fbp(black_box(&parallel), &filter, grid).unwrap()))
        });
        g.bench_function(BenchmarkId::new("dense_180x128", name), |b| {
            b.iter(|| pool.install(|| fbp(black_box(&dense_parallel), &filter, grid).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(benches, bench_rasterize, bench_scan, bench_fbp);
criterion_main!(benches);
