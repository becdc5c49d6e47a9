//! Each kernel runs inside a one-thread rayon pool ("sequential") and inside
//! the default pool ("parallel"). Build with `--no-default-features` to
//! measure the plain sequential fallback instead.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPool;
use std::hint::black_box;

use szgl_core::gram::{gamma_sequence, SamplingGrid};
use szgl_core::linalg::{tridiagonalize, Cholesky};
use szgl_core::mc::sample_paths;
use szgl_core::models::SpectralModel;
use szgl_core::spectra::{circulant_dft, circulant_dft_fast, norm_report};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    vec![
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
        ("parallel", rayon::ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn ou11() -> SpectralModel {
    SpectralModel::ornstein_uhlenbeck(1.0, 1.0).unwrap()
}

fn bench_kernels(c: &mut Criterion) {
    let pools = pools();
    let grid = SamplingGrid::new(50.0, 1000).unwrap();
    let gs = gamma_sequence(&ou11(), &grid).unwrap();
    let a = gs.toeplitz_matrix().shifted_identity();
    let big = gamma_sequence(&ou11(), &SamplingGrid::new(100.0, 4000).unwrap()).unwrap();
    let mc_grid = SamplingGrid::new(10.0, 100).unwrap();

    let mut g = c.benchmark_group("kernels");
    g.sample_size(10);
    for (name, pool) in &pools {
        g.bench_function(BenchmarkId::new("gamma_sequence_n4000", name), |b| {
            let grid = *big.grid();
            b.iter(|| pool.install(|| gamma_sequence(&ou11(), black_box(&grid)).unwrap()))
        });
        g.bench_function(BenchmarkId::new("circulant_dft_n4000", name), |b| {
            b.iter(|| pool.install(|| circulant_dft(black_box(big.circulant_row())).unwrap()))
        });
        g.bench_function(BenchmarkId::new("norm_report_n4000", name), |b| {
            b.iter(|| pool.install(|| norm_report(black_box(&big))))
        });
        g.bench_function(BenchmarkId::new("cholesky_n1000", name), |b| {
            b.iter(|| pool.install(|| Cholesky::factor(black_box(&a)).unwrap()))
        });
        g.bench_function(BenchmarkId::new("tridiagonalize_n1000", name), |b| {
            b.iter(|| pool.install(|| tridiagonalize(black_box(&a))))
        });
        g.bench_function(BenchmarkId::new("sample_paths_N1000", name), |b| {
            b.iter(|| pool.install(|| sample_paths(&ou11(), &mc_grid, 8, 1000, black_box(7)).unwrap()))
        });
    }
    // The FFT path is single-threaded; kept as a reference point for the direct DFT.
    g.bench_function("circulant_dft_fft_n4000", |b| {
        b.iter(|| circulant_dft_fast(black_box(big.circulant_row())).unwrap())
    });
    g.finish();
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
