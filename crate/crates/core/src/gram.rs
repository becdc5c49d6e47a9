//! Gram coefficients of the integrated input over an even sampling grid,
//! and the Toeplitz / circulant matrices built from them.
//!
//! `γ_l = (1/h) ∫_0^h ∫_{lh}^{(l+1)h} R(v - u) dv du` with `h = T/n`. Only
//! `l >= 0` is stored; `γ_{-l} = γ_l` because `R` is even.

use std::io::Write;

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::models::SpectralModel;
use crate::par;
use crate::quad::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingGrid {
    horizon: f64,
    samples: usize,
}

impl SamplingGrid {
    pub fn new(horizon: f64, samples: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("horizon must be finite and > 0, got {horizon}")));
        }
        if samples == 0 {
            return Err(Error::InvalidGrid("sample count must be >= 1".into()));
        }
        Ok(Self { horizon, samples })
    }

    /// `T`.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `n`.
    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `h = T/n`.
    pub fn step(&self) -> f64 {
        self.horizon / self.samples as f64
    }

    /// `t_i = iT/n`, exact at both ends.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.samples {
            self.horizon
        } else {
            i as f64 * self.horizon / self.samples as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramSequence {
    grid: SamplingGrid,
    gamma: Vec<f64>,
    gamma_hat: Vec<f64>,
}

impl GramSequence {
    /// Wraps precomputed `γ_0..γ_{n-1}` and derives `γ̂`.
    pub fn from_gamma(grid: SamplingGrid, gamma: Vec<f64>) -> Result<Self> {
        let n = grid.samples();
        if gamma.len() != n {
            return Err(Error::InvalidArgument(format!("expected {n} coefficients, got {}", gamma.len())));
        }
        let gamma_hat = (0..n).map(|l| if l == 0 { gamma[0] } else { gamma[l] + gamma[n - l] }).collect();
        Ok(Self { grid, gamma, gamma_hat })
    }

    pub fn grid(&self) -> &SamplingGrid {
        &self.grid
    }

    /// `γ_0..γ_{n-1}`.
    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// `γ̂_0..γ̂_{n-1}`; also the first row of the circulant wrap.
    pub fn gamma_hat(&self) -> &[f64] {
        &self.gamma_hat
    }

    /// `Σ_{|l| < n} |γ_l|`.
    pub fn abs_sum(&self) -> f64 {
        self.gamma[0].abs() + 2.0 * self.gamma[1..].iter().map(|g| g.abs()).sum::<f64>()
    }

    /// Dense `A(i, j) = γ_{|j-i|}`.
    pub fn toeplitz_matrix(&self) -> DenseMatrix {
        let n = self.grid.samples();
        let g = &self.gamma;
        DenseMatrix::from_fn(n, |i, j| g[i.abs_diff(j)])
    }

    /// First row `(γ̂_0, …, γ̂_{n-1})` of the circulant wrap `Â`.
    pub fn circulant_row(&self) -> &[f64] {
        &self.gamma_hat
    }

    /// Dense circulant `Â(i, j) = γ̂_{(j-i) mod n}`.
    pub fn circulant_matrix_dense(&self) -> DenseMatrix {
        let n = self.grid.samples();
        let r = &self.gamma_hat;
        DenseMatrix::from_fn(n, |i, j| r[(j + n - i) % n])
    }

    /// Writes `(index, gamma, gammaHat)` rows.
    pub fn to_table(&self) -> crate::report::Table {
        let mut t = crate::report::Table::new(&["index", "gamma", "gammaHat"]);
        for (l, (g, gh)) in self.gamma.iter().zip(&self.gamma_hat).enumerate() {
            t.push(vec![l.into(), (*g).into(), (*gh).into()]);
        }
        t
    }

    pub fn write_table<W: Write>(&self, out: &mut W, format: crate::report::Format) -> Result<()> {
        self.to_table().write(out, format)
    }
}

/// Gram coefficients from the per-model closed forms.
pub fn gamma_sequence(model: &SpectralModel, grid: &SamplingGrid) -> Result<GramSequence> {
    model.validate()?;
    let h = grid.step();
    let gamma = par::map_indexed(grid.samples(), |l| cell_covariance(model, l, h));
    GramSequence::from_gamma(*grid, gamma)
}

/// Closed-form `γ_l` for step `h`.
pub fn cell_covariance(model: &SpectralModel, lag: usize, h: f64) -> f64 {
    match *model {
        SpectralModel::OrnsteinUhlenbeck { power, rate } => {
            let x = rate * h;
            if lag == 0 {
                2.0 * power * x_plus_expm1_neg(x) / (rate * rate * h)
            } else {
                let e = (-x).exp_m1();
                power * (-x * (lag as f64 - 1.0)).exp() * e * e / (rate * rate * h)
            }
        }
        SpectralModel::Triangular { power, support } => {
            let x = lag as f64 * h;
            if lag >= 1 && x - h >= support {
                return 0.0;
            }
            let g = |y: f64| {
                let y = y.abs();
                if y <= support {
                    y * y * (0.5 - y / (6.0 * support))
                } else {
                    support * support / 3.0 + 0.5 * support * (y - support)
                }
            };
            power * (g(x + h) - 2.0 * g(x) + g(x - h)) / h
        }
        SpectralModel::GaussianKernel { power, width } => {
            // Second difference of G(y) = σ²(E(y) - 1) + σ√(π/2)·y·erf(y/(σ√2)),
            // written with erfc so that the linear growth of G cancels exactly.
            let x = lag as f64 * h;
            let s = width * 2f64.sqrt();
            let e = |y: f64| (-0.5 * (y / width).powi(2)).exp();
            let ye = |y: f64| {
                let y = y.abs();
                y * libm::erfc(y / s)
            };
            let kink = if lag == 0 { 2.0 * h } else { 0.0 };
            let second_e = e(x + h) - 2.0 * e(x) + e(x - h);
            let second_abs_erf = kink - (ye(x + h) - 2.0 * ye(x) + ye(x - h));
            power * (width * width * second_e + width * (std::f64::consts::PI / 2.0).sqrt() * second_abs_erf) / h
        }
    }
}

/// `x + e^{-x} - 1`, accurate for small `x`.
fn x_plus_expm1_neg(x: f64) -> f64 {
    if x < 0.5 {
        // Σ_{k>=2} (-x)^k / k!
        let mut term = x * x / 2.0;
        let mut sum = term;
        for k in 3..30 {
            term *= -x / k as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        x + (-x).exp_m1()
    }
}

/// Absolute accuracy target per cell for [`gamma_sequence_by_quadrature`].
pub const CELL_TOLERANCE: f64 = 1e-10;

/// Gram coefficients by direct quadrature of the hat-kernel form
/// `γ_l = (1/h) ∫_{-h}^{h} (h - |s|) R(lh + s) ds`, split at every kink of the
/// integrand and refined by bisection until a 16-point Gauss–Legendre rule
/// agrees with its two-halves refinement to [`CELL_TOLERANCE`].
pub fn gamma_sequence_by_quadrature(model: &SpectralModel, grid: &SamplingGrid) -> Result<GramSequence> {
    model.validate()?;
    let h = grid.step();
    let rule = GaussLegendre::new(16);
    let kinks = model.acf_kinks();
    let gamma: Vec<Result<f64>> = par::map_indexed(grid.samples(), |l| {
        let center = l as f64 * h;
        let mut cuts = vec![-h, 0.0, h];
        cuts.extend(kinks.iter().map(|k| k - center).filter(|s| *s > -h && *s < h));
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let f = |s: f64| (h - s.abs()) * model.acf(center + s);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            total += refine_piece(&rule, &f, w[0], w[1], CELL_TOLERANCE * h / 2.0, 0)
                .ok_or(Error::QuadratureFailure { lag: l, tolerance: CELL_TOLERANCE })?;
        }
        Ok(total / h)
    });
    let gamma = gamma.into_iter().collect::<Result<Vec<_>>>()?;
    GramSequence::from_gamma(*grid, gamma)
}

fn refine_piece<F: Fn(f64) -> f64>(rule: &GaussLegendre, f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Option<f64> {
    let whole = rule.integrate(f, a, b);
    let mid = 0.5 * (a + b);
    let halves = rule.integrate(f, a, mid) + rule.integrate(f, mid, b);
    if (whole - halves).abs() <= tol {
        return Some(halves);
    }
    if depth >= 20 {
        return None;
    }
    Some(refine_piece(rule, f, a, mid, tol / 2.0, depth + 1)? + refine_piece(rule, f, mid, b, tol / 2.0, depth + 1)?)
}
