//! Kernel timings on a single-thread pool versus the full pool.
//!
//! Build with `--no-default-features` to time the sequential fallback; the
//! pool size then has no effect.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPoolBuilder;

use lripct::classical::{fbp, FilterKind};
use lripct::conditioning::svd;
use lripct::geometry::default_geometry;
use lripct::operators::{back_project, build_system_matrix, forward_project, Projector};
use lripct::simulation::shepp_logan;
use lripct::variational::tv_prox;

fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let full = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut sizes = vec![1];
    if full > 1 {
        sizes.push(full);
    }
    sizes
        .into_iter()
        .map(|t| (format!("{t}-thread"), ThreadPoolBuilder::new().num_threads(t).build().unwrap()))
        .collect()
}

fn kernels(c: &mut Criterion) {
    let n = 64;
    let geom = default_geometry(n, 120.0).unwrap();
    let img = shepp_logan(n).unwrap();
    let sino = forward_project(&img, &geom).unwrap();
    let proj = Projector::new(&geom);
    let dense = build_system_matrix(&default_geometry(16, 90.0).unwrap()).unwrap().to_dense();
    let noisy = img.map(|v| v + 0.05 * (v * 97.0).sin());

    let mut group = c.benchmark_group("kernels");
    group.sample_size(10);
    for (label, pool) in pools() {
        group.bench_function(BenchmarkId::new("forward_project_64", &label), |b| {
            b.iter(|| pool.install(|| forward_project(&img, &geom).unwrap()))
        });
        group.bench_function(BenchmarkId::new("back_project_64", &label), |b| {
            b.iter(|| pool.install(|| back_project(&sino, &geom).unwrap()))
        });
        group.bench_function(BenchmarkId::new("projector_apply_64", &label), |b| {
            b.iter(|| pool.install(|| proj.apply(&img).unwrap()))
        });
        group.bench_function(BenchmarkId::new("fbp_64", &label), |b| {
            b.iter(|| pool.install(|| fbp(&sino, &geom, FilterKind::Ramp).unwrap()))
        });
        group.bench_function(BenchmarkId::new("tv_prox_64x200", &label), |b| {
            b.iter(|| pool.install(|| tv_prox(&noisy, 0.01, 200)))
        });
        group.bench_function(BenchmarkId::new("svd_system_16", &label), |b| b.iter(|| pool.install(|| svd(&dense))));
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
