//! Spectra of the Toeplitz matrix `A` and its circulant wrap `Â`, the
//! Cholesky log-determinant, trace powers and the norm diagnostics.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::gram::{GramSequence, SamplingGrid};
use crate::linalg::{symmetric_eigenvalues, Cholesky, DenseMatrix};
use crate::models::SpectralModel;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectrumSource {
    Toeplitz,
    Circulant,
}

/// Eigenvalues sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    pub source: SpectrumSource,
    pub eigenvalues: Vec<f64>,
    pub grid: SamplingGrid,
}

impl SpectrumResult {
    fn new(source: SpectrumSource, mut eigenvalues: Vec<f64>, grid: SamplingGrid) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        Self { source, eigenvalues, grid }
    }

    /// `Σ log(1 + ψ)`.
    pub fn log1p_sum(&self) -> f64 {
        let ev = &self.eigenvalues;
        par::sum_indexed(ev.len(), |m| ev[m].ln_1p())
    }

    /// `½ Σ log(1 + ψ)`, the mutual information in nats.
    pub fn mutual_information(&self) -> f64 {
        0.5 * self.log1p_sum()
    }

    pub fn min(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Relative asymmetry tolerated in a circulant first row.
pub const WRAP_SYMMETRY_TOL: f64 = 1e-12;

fn check_wrap_symmetry(row: &[f64]) -> Result<()> {
    let n = row.len();
    if n == 0 {
        return Err(Error::InvalidArgument("circulant row must be non-empty".into()));
    }
    let scale = row.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(f64::MIN_POSITIVE);
    for l in 1..n {
        let diff = (row[l] - row[n - l]).abs();
        if diff > WRAP_SYMMETRY_TOL * scale {
            return Err(Error::Asymmetry { index: l, diff });
        }
    }
    Ok(())
}

/// `ψ̂_m = Σ_k γ̂_k e^{-2πimk/n}` for `m = 0..n` by direct summation. For a
/// wrap-symmetric row the sum is real; index `m = 0` doubles as `m = n`.
pub fn circulant_dft(row: &[f64]) -> Result<Vec<f64>> {
    check_wrap_symmetry(row)?;
    let n = row.len();
    let cos_table: Vec<f64> = (0..n).map(|j| (2.0 * PI * j as f64 / n as f64).cos()).collect();
    Ok(par::map_indexed(n, |m| {
        let mut idx = 0usize;
        let mut s = 0.0;
        for &g in row {
            s += g * cos_table[idx];
            idx += m;
            if idx >= n {
                idx -= n;
            }
        }
        s
    }))
}

/// Same values as [`circulant_dft`] through an FFT (any length).
pub fn circulant_dft_fast(row: &[f64]) -> Result<Vec<f64>> {
    check_wrap_symmetry(row)?;
    let mut buf: Vec<Complex<f64>> = row.iter().map(|&g| Complex::new(g, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(row.len()).process(&mut buf);
    Ok(buf.into_iter().map(|c| c.re).collect())
}

pub fn circulant_eigs(row: &[f64], grid: SamplingGrid) -> Result<SpectrumResult> {
    Ok(SpectrumResult::new(SpectrumSource::Circulant, circulant_dft(row)?, grid))
}

pub fn toeplitz_eigs(a: &DenseMatrix, grid: SamplingGrid) -> Result<SpectrumResult> {
    Ok(SpectrumResult::new(SpectrumSource::Toeplitz, symmetric_eigenvalues(a)?, grid))
}

/// `½ log det(I + A)` through the Cholesky factor of `I + A`.
pub fn mi_logdet(a: &DenseMatrix) -> Result<f64> {
    let ch = Cholesky::factor(&a.shifted_identity())?;
    Ok(ch.diagonal().iter().map(|d| d.ln()).sum())
}

/// `Σ ψ^k` over a spectrum.
pub fn trace_power_spectrum(eigenvalues: &[f64], k: u32) -> f64 {
    assert!(k >= 1, "trace power needs k >= 1");
    par::sum_indexed(eigenvalues.len(), |m| eigenvalues[m].powi(k as i32))
}

/// `tr(M^k)` by dense multiplication.
pub fn trace_power_dense(m: &DenseMatrix, k: u32) -> f64 {
    assert!(k >= 1, "trace power needs k >= 1");
    match k {
        1 => m.trace(),
        2 => m.trace_of_product(m),
        _ => {
            let hi = k.div_ceil(2);
            let lo = k / 2;
            let mut powers = vec![m.clone()];
            for _ in 1..hi {
                let next = powers.last().expect("non-empty").matmul(m);
                powers.push(next);
            }
            powers[hi as usize - 1].trace_of_product(&powers[lo as usize - 1])
        }
    }
}

/// Norm quantities bounding `A` and `A - Â`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    /// `max_θ |g(θ)|` on a `4n`-point grid, `g(θ) = Σ_{|l|<n} γ_l e^{ilθ}`.
    pub op_norm_bound: f64,
    /// `‖A‖_F² / T`.
    pub frob_sq_over_t: f64,
    /// `‖Â‖_F² / T`.
    pub circulant_frob_sq_over_t: f64,
    /// `‖A - Â‖_F² / T = 2 Σ_{k=1}^{n-1} k γ_k² / T`.
    pub wrap_diff_frob_sq_over_t: f64,
}

pub fn norm_report(gs: &GramSequence) -> NormReport {
    let g = gs.gamma();
    let gh = gs.gamma_hat();
    let n = g.len();
    let t = gs.grid().horizon();
    let points = 4 * n;
    let cos_table: Vec<f64> = (0..points).map(|j| (2.0 * PI * j as f64 / points as f64).cos()).collect();
    let op_norm_bound = par::max_indexed(points, |j| {
        let mut idx = 0usize;
        let mut s = g[0];
        for &gl in &g[1..] {
            idx += j;
            if idx >= points {
                idx %= points;
            }
            s += 2.0 * gl * cos_table[idx];
        }
        s.abs()
    });
    let frob = n as f64 * g[0] * g[0] + 2.0 * par::sum_indexed(n - 1, |k| (n - k - 1) as f64 * g[k + 1] * g[k + 1]);
    let circ = n as f64 * gh.iter().map(|x| x * x).sum::<f64>();
    let wrap = 2.0 * par::sum_indexed(n - 1, |k| (k + 1) as f64 * g[k + 1] * g[k + 1]);
    NormReport {
        op_norm_bound,
        frob_sq_over_t: frob / t,
        circulant_frob_sq_over_t: circ / t,
        wrap_diff_frob_sq_over_t: wrap / t,
    }
}

/// `sup_{0 < m < n/2} |ψ̂_m - 2πf(2πm/T)|` for a DFT-ordered circulant spectrum.
pub fn psd_mapping_sup_error(model: &SpectralModel, dft: &[f64], grid: &SamplingGrid) -> f64 {
    let n = dft.len();
    let t = grid.horizon();
    (1..n)
        .filter(|m| 2 * m < n)
        .map(|m| (dft[m] - 2.0 * PI * model.psd(2.0 * PI * m as f64 / t)).abs())
        .fold(0.0, f64::max)
}

/// `2πf(λ_m)` matched to DFT index `m`: `λ_m = 2πm/T` below `n/2` and
/// `-2π(n-m)/T` above.
pub fn psd_at_dft_index(model: &SpectralModel, m: usize, grid: &SamplingGrid) -> f64 {
    let n = grid.samples();
    let t = grid.horizon();
    let freq = if 2 * m <= n { m as f64 } else { -((n - m) as f64) };
    2.0 * PI * model.psd(2.0 * PI * freq / t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::gamma_sequence;

    fn ou11() -> SpectralModel {
        SpectralModel::ornstein_uhlenbeck(1.0, 1.0).unwrap()
    }

    fn point(t: f64, n: usize) -> GramSequence {
        gamma_sequence(&ou11(), &SamplingGrid::new(t, n).unwrap()).unwrap()
    }

    /// Roots of det(A - xI) for a 3×3 symmetric matrix: bracketing and
    /// bisection on the explicitly expanded characteristic polynomial.
    fn char_poly_roots_3x3(a: &DenseMatrix) -> Vec<f64> {
        let det = |x: f64| {
            let m = |i: usize, j: usize| a.get(i, j) - if i == j { x } else { 0.0 };
            m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0))
        };
        let (lo, hi) = (-10.0, 10.0);
        let steps = 20000;
        let mut roots = Vec::new();
        for s in 0..steps {
            let a0 = lo + (hi - lo) * s as f64 / steps as f64;
            let b0 = lo + (hi - lo) * (s + 1) as f64 / steps as f64;
            let (mut a1, mut b1) = (a0, b0);
            if det(a1) * det(b1) > 0.0 {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (a1 + b1);
                if det(a1) * det(mid) <= 0.0 {
                    b1 = mid;
                } else {
                    a1 = mid;
                }
            }
            roots.push(0.5 * (a1 + b1));
        }
        roots
    }

    #[test]
    fn circulant_small_cases() {
        let g1 = SamplingGrid::new(1.0, 1).unwrap();
        assert_eq!(circulant_eigs(&[0.8], g1).unwrap().eigenvalues, vec![0.8]);
        let dft = circulant_dft(&[0.8, 0.3]).unwrap();
        assert!((dft[0] - 1.1).abs() < 1e-15 && (dft[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn circulant_rejects_asymmetric_row() {
        assert!(matches!(circulant_dft(&[1.0, 0.2, 0.3]), Err(Error::Asymmetry { index: 1, .. })));
    }

    #[test]
    fn fast_dft_agrees_with_direct() {
        for n in [1, 2, 7, 97, 1000] {
            let gs = point(n as f64 / 20.0, n);
            let a = circulant_dft(gs.circulant_row()).unwrap();
            let b = circulant_dft_fast(gs.circulant_row()).unwrap();
            let scale = a.iter().fold(0.0f64, |s, x| s.max(x.abs()));
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-10 * scale, "n={n}");
            }
        }
    }

    #[test]
    fn circulant_eigen_tracks_the_psd() {
        let gs = point(50.0, 1000);
        let dft = circulant_dft(gs.circulant_row()).unwrap();
        let target = 2.0 * PI * ou11().psd(2.0 * PI * 10.0 / 50.0);
        assert!((dft[10] - target).abs() < 0.05);
    }

    #[test]
    fn circulant_dft_matches_dense_eigensolve() {
        let gs = point(3.0, 24);
        let mut from_dft = circulant_dft(gs.circulant_row()).unwrap();
        from_dft.sort_by(f64::total_cmp);
        let dense = symmetric_eigenvalues(&gs.circulant_matrix_dense()).unwrap();
        for (x, y) in from_dft.iter().zip(&dense) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn toeplitz_small_cases() {
        let g1 = SamplingGrid::new(1.0, 1).unwrap();
        let gs = point(1.0, 1);
        let s = toeplitz_eigs(&gs.toeplitz_matrix(), g1).unwrap();
        assert_eq!(s.eigenvalues, gs.gamma().to_vec());
        let c = DenseMatrix::from_fn(5, |i, j| if i == j { 0.25 } else { 0.0 });
        assert!(toeplitz_eigs(&c, g1).unwrap().eigenvalues.iter().all(|&x| x == 0.25));
    }

    #[test]
    fn toeplitz_3x3_matches_characteristic_polynomial() {
        let gs = point(3.0, 3);
        let a = gs.toeplitz_matrix();
        let ours = toeplitz_eigs(&a, *gs.grid()).unwrap().eigenvalues;
        let oracle = char_poly_roots_3x3(&a);
        assert_eq!(oracle.len(), 3);
        for (x, y) in ours.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10, "{x} vs {y}");
        }
    }

    #[test]
    fn toeplitz_is_psd() {
        let gs = point(10.0, 100);
        let s = toeplitz_eigs(&gs.toeplitz_matrix(), *gs.grid()).unwrap();
        assert!(s.min() >= -1e-10);
        assert!(s.min() >= -1e-9 * gs.gamma()[0]);
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(mi_logdet(&DenseMatrix::zeros(4)).unwrap(), 0.0);
        let gs = point(1.0, 1);
        let v = mi_logdet(&gs.toeplitz_matrix()).unwrap();
        assert!((v - 0.5 * (1.0 + 2.0 / std::f64::consts::E).ln()).abs() < 1e-15);
    }

    #[test]
    fn logdet_routes_agree() {
        for (t, n) in [(5.0, 50), (10.0, 333), (20.0, 400)] {
            let gs = point(t, n);
            let a = gs.toeplitz_matrix();
            let chol = mi_logdet(&a).unwrap();
            let eig = toeplitz_eigs(&a, *gs.grid()).unwrap().mutual_information();
            assert!(((chol - eig) / chol).abs() < 1e-8);
        }
    }

    #[test]
    fn trace_power_examples() {
        let gs = point(4.0, 40);
        let a = gs.toeplitz_matrix();
        let s = toeplitz_eigs(&a, *gs.grid()).unwrap();
        assert!((trace_power_dense(&a, 1) - 40.0 * gs.gamma()[0]).abs() < 1e-13);
        assert!((trace_power_dense(&a, 2) - a.frobenius_sq()).abs() < 1e-13);
        for k in 1..=5 {
            let dense = trace_power_dense(&a, k);
            let spec = trace_power_spectrum(&s.eigenvalues, k);
            assert!(((dense - spec) / dense).abs() < 1e-8, "k={k}");
        }
    }

    #[test]
    fn trace_power_gap_k3_against_dense_oracle() {
        let gs = point(10.0, 200);
        let a = gs.toeplitz_matrix();
        let c = gs.circulant_matrix_dense();
        let spec_gap = trace_power_spectrum(&toeplitz_eigs(&a, *gs.grid()).unwrap().eigenvalues, 3)
            - trace_power_spectrum(&circulant_dft(gs.circulant_row()).unwrap(), 3);
        let dense_gap = trace_power_dense(&a, 3) - trace_power_dense(&c, 3);
        assert!((spec_gap - dense_gap).abs() < 1e-9);
    }

    #[test]
    fn norm_report_zero_and_bounds() {
        let z =
            gamma_sequence(&SpectralModel::ornstein_uhlenbeck(0.0, 1.0).unwrap(), &SamplingGrid::new(5.0, 20).unwrap())
                .unwrap();
        let r = norm_report(&z);
        assert_eq!((r.op_norm_bound, r.frob_sq_over_t, r.wrap_diff_frob_sq_over_t), (0.0, 0.0, 0.0));
        for (t, n) in [(1.0, 1), (3.0, 7), (10.0, 100), (40.0, 400)] {
            let r = norm_report(&point(t, n));
            assert!(r.op_norm_bound <= 2.0);
            assert!(r.frob_sq_over_t <= 2.0);
        }
    }

    #[test]
    fn norm_report_matches_dense_frobenius() {
        let gs = point(6.0, 30);
        let r = norm_report(&gs);
        let a = gs.toeplitz_matrix();
        let c = gs.circulant_matrix_dense();
        let diff = DenseMatrix::from_fn(30, |i, j| a.get(i, j) - c.get(i, j));
        assert!((r.frob_sq_over_t - a.frobenius_sq() / 6.0).abs() < 1e-14);
        assert!((r.circulant_frob_sq_over_t - c.frobenius_sq() / 6.0).abs() < 1e-14);
        assert!((r.wrap_diff_frob_sq_over_t - diff.frobenius_sq() / 6.0).abs() < 1e-14);
    }

    #[test]
    fn wrap_difference_is_small_at_long_horizon() {
        let r = norm_report(&point(100.0, 4000));
        // direct summation oracle
        let gs = point(100.0, 4000);
        let direct: f64 = gs.gamma().iter().enumerate().map(|(k, g)| 2.0 * k as f64 * g * g).sum::<f64>() / 100.0;
        assert!((r.wrap_diff_frob_sq_over_t - direct).abs() < 1e-12);
        assert!(r.wrap_diff_frob_sq_over_t < 0.01);
    }
}
