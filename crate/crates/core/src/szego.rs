//! Convergence studies for the sampled channel: the rate sweep over a
//! `(T, n)` schedule, the Toeplitz/circulant equivalence diagnostics, the
//! polynomial sandwich around `log(1 + x)`, the circulant power-sum limits
//! and nested-grid refinement.

use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gram::{gamma_sequence, GramSequence, SamplingGrid};
use crate::models::{Functional, SpectralModel};
use crate::par;
use crate::report::Table;
use crate::spectra::{
    circulant_dft, mi_logdet, norm_report, psd_mapping_sup_error, toeplitz_eigs, trace_power_spectrum, NormReport,
    SpectrumResult, SpectrumSource,
};

/// Relative allowance for summation rounding when checking the closed-form
/// bounds `Σ|γ_l| <= ∫|R|` and friends, which are tight as `T → ∞`.
pub const BOUND_SLACK: f64 = 1e-12;

/// Agreement required between the Cholesky and eigenvalue log-determinants.
pub const ROUTE_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulePoint {
    pub horizon: f64,
    pub samples: usize,
}

impl SchedulePoint {
    pub fn step(&self) -> f64 {
        self.horizon / self.samples as f64
    }

    pub fn grid(&self) -> Result<SamplingGrid> {
        SamplingGrid::new(self.horizon, self.samples)
    }
}

/// `(T_k, n_k)` with `T_k` strictly increasing and `h_k = T_k/n_k`
/// non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSchedule {
    points: Vec<SchedulePoint>,
}

impl ConvergenceSchedule {
    pub fn new(points: Vec<SchedulePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidSchedule("schedule must not be empty".into()));
        }
        for p in &points {
            p.grid().map_err(|e| Error::InvalidSchedule(e.to_string()))?;
            if p.samples < 2 {
                return Err(Error::InvalidSchedule(format!("n must be >= 2, got {}", p.samples)));
            }
        }
        for w in points.windows(2) {
            if w[1].horizon <= w[0].horizon {
                return Err(Error::InvalidSchedule(format!(
                    "horizons must strictly increase ({} then {})",
                    w[0].horizon, w[1].horizon
                )));
            }
            if w[1].step() > w[0].step() {
                return Err(Error::InvalidSchedule(format!(
                    "step T/n must not increase ({} then {})",
                    w[0].step(),
                    w[1].step()
                )));
            }
        }
        Ok(Self { points })
    }

    /// `n_k = T_k / step` for each horizon.
    pub fn with_step(horizons: &[f64], step: f64) -> Result<Self> {
        Self::new(
            horizons.iter().map(|&t| SchedulePoint { horizon: t, samples: (t / step).round() as usize }).collect(),
        )
    }

    pub fn points(&self) -> &[SchedulePoint] {
        &self.points
    }
}

impl Default for ConvergenceSchedule {
    /// `(25, 500), (50, 1000), (100, 2000)`: `h = 0.05`.
    fn default() -> Self {
        Self::with_step(&[25.0, 50.0, 100.0], 0.05).expect("default schedule is valid")
    }
}

impl FromStr for ConvergenceSchedule {
    type Err = Error;

    /// `T:n[,T:n...]`, e.g. `25:500,50:1000`.
    fn from_str(s: &str) -> Result<Self> {
        let points = s
            .split(',')
            .map(|item| {
                let (t, n) = item
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| Error::InvalidSchedule(format!("expected T:n, got `{item}`")))?;
                let horizon =
                    t.trim().parse::<f64>().map_err(|_| Error::InvalidSchedule(format!("bad horizon `{t}`")))?;
                let samples =
                    n.trim().parse::<usize>().map_err(|_| Error::InvalidSchedule(format!("bad sample count `{n}`")))?;
                Ok(SchedulePoint { horizon, samples })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }
}

/// Every quantity tracked at one `(T, n)` point.
#[derive(Debug, Clone)]
pub struct PointDiagnostics {
    pub point: SchedulePoint,
    /// `(1/T) · ½ log det(I + A)` (Cholesky).
    pub sampled_rate: f64,
    /// `(1/2T) Σ log(1 + ψ_m)`.
    pub eigen_rate: f64,
    /// `(1/2T) Σ log(1 + ψ̂_m)`.
    pub circulant_rate: f64,
    pub norms: NormReport,
    pub abs_gamma_sum: f64,
    /// `|tr(A^k) - tr(Â^k)| / T` for `k = 1..4`.
    pub trace_gaps: [f64; 4],
    pub psd_sup_error: f64,
    pub toeplitz: SpectrumResult,
    pub circulant: SpectrumResult,
    /// Circulant eigenvalues in DFT order.
    pub circulant_dft: Vec<f64>,
}

impl PointDiagnostics {
    /// `|Σ log(1+ψ) - Σ log(1+ψ̂)| / T`.
    pub fn logdet_gap_over_t(&self) -> f64 {
        2.0 * (self.eigen_rate - self.circulant_rate).abs()
    }

    pub fn max_abs_circulant_eig(&self) -> f64 {
        self.circulant.min().abs().max(self.circulant.max().abs())
    }

    /// Relative disagreement of the Cholesky and eigenvalue routes.
    pub fn route_mismatch(&self) -> f64 {
        if self.sampled_rate == 0.0 {
            self.eigen_rate.abs()
        } else {
            ((self.sampled_rate - self.eigen_rate) / self.sampled_rate).abs()
        }
    }

    /// Names of the closed-form bounds this point violates.
    pub fn violations(&self, model: &SpectralModel) -> Vec<String> {
        let abs_int = model.abs_acf_integral();
        let mut v = Vec::new();
        let slack = 1.0 + BOUND_SLACK;
        if self.abs_gamma_sum > abs_int * slack {
            v.push(format!("sum |gamma| {} > {}", self.abs_gamma_sum, abs_int));
        }
        if self.max_abs_circulant_eig() > 2.0 * abs_int * slack {
            v.push(format!("|psi_hat| {} > {}", self.max_abs_circulant_eig(), 2.0 * abs_int));
        }
        if self.norms.op_norm_bound > abs_int * slack {
            v.push(format!("operator bound {} > {}", self.norms.op_norm_bound, abs_int));
        }
        let frob_bound = abs_int * model.acf_sup();
        if self.norms.frob_sq_over_t > frob_bound * slack {
            v.push(format!("|A|_F^2/T {} > {}", self.norms.frob_sq_over_t, frob_bound));
        }
        let mean_eig = self.toeplitz.eigenvalues.iter().sum::<f64>() / self.point.samples as f64;
        if self.toeplitz.min() < -1e-9 * mean_eig {
            v.push(format!("Toeplitz eigenvalue {} < 0", self.toeplitz.min()));
        }
        if self.route_mismatch() > ROUTE_TOLERANCE {
            v.push(format!("log-det routes differ by {:e}", self.route_mismatch()));
        }
        if !(self.sampled_rate >= 0.0 && self.circulant_rate.is_finite()) {
            v.push("negative or non-finite rate".into());
        }
        v
    }
}

/// Builds every diagnostic for one `(T, n)` point.
pub fn study_point(model: &SpectralModel, point: SchedulePoint) -> Result<PointDiagnostics> {
    let run = || -> Result<PointDiagnostics> {
        let grid = point.grid()?;
        let gs = gamma_sequence(model, &grid)?;
        study_gram(model, &gs)
    };
    run().map_err(|e| e.at_point(point.horizon, point.samples))
}

fn study_gram(model: &SpectralModel, gs: &GramSequence) -> Result<PointDiagnostics> {
    let grid = *gs.grid();
    let t = grid.horizon();
    let n = grid.samples();
    let a = gs.toeplitz_matrix();
    let sampled_rate = mi_logdet(&a)? / t;
    let toeplitz = toeplitz_eigs(&a, grid)?;
    drop(a);
    let dft = circulant_dft(gs.circulant_row())?;
    if let Some(&bad) = dft.iter().find(|&&x| x <= -1.0) {
        return Err(Error::DomainExceeded { value: bad, lower: -1.0, upper: f64::INFINITY });
    }
    let circulant = SpectrumResult {
        source: SpectrumSource::Circulant,
        eigenvalues: {
            let mut v = dft.clone();
            v.sort_by(f64::total_cmp);
            v
        },
        grid,
    };
    let eigen_rate = toeplitz.mutual_information() / t;
    let circulant_rate = circulant.mutual_information() / t;
    let mut trace_gaps = [0.0; 4];
    // tr(A) and tr(Â) are both n·γ_0.
    trace_gaps[0] = (n as f64 * gs.gamma()[0] - n as f64 * gs.gamma_hat()[0]).abs() / t;
    for k in 2..=4u32 {
        trace_gaps[k as usize - 1] =
            (trace_power_spectrum(&toeplitz.eigenvalues, k) - trace_power_spectrum(&circulant.eigenvalues, k)).abs()
                / t;
    }
    Ok(PointDiagnostics {
        point: SchedulePoint { horizon: t, samples: n },
        sampled_rate,
        eigen_rate,
        circulant_rate,
        norms: norm_report(gs),
        abs_gamma_sum: gs.abs_sum(),
        trace_gaps,
        psd_sup_error: psd_mapping_sup_error(model, &dft, &grid),
        toeplitz,
        circulant,
        circulant_dft: dft,
    })
}

#[derive(Debug, Clone)]
pub struct RateRow {
    pub diagnostics: PointDiagnostics,
    pub abs_err: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct RateReport {
    pub model: SpectralModel,
    /// `(1/4π) ∫ log(1 + 2πf(λ)) dλ`.
    pub target_rate: f64,
    pub rows: Vec<RateRow>,
}

pub const RATE_COLUMNS: [&str; 14] = [
    "T",
    "n",
    "h",
    "sampledRate",
    "circulantRate",
    "targetRate",
    "absErr",
    "relErr",
    "wrapDiffFrobSqOverT",
    "traceGap_k1",
    "traceGap_k2",
    "traceGap_k3",
    "traceGap_k4",
    "eigPsdSupErr",
];

impl RateReport {
    /// `(1/2π) ∫ log(1 + 2πf)`: the limit of `log det(I + A)/T`, twice the rate.
    pub fn spectral_integral(&self) -> f64 {
        2.0 * self.target_rate
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&RATE_COLUMNS);
        for r in &self.rows {
            let d = &r.diagnostics;
            t.push(vec![
                d.point.horizon.into(),
                d.point.samples.into(),
                d.point.step().into(),
                d.sampled_rate.into(),
                d.circulant_rate.into(),
                self.target_rate.into(),
                r.abs_err.into(),
                r.rel_err.into(),
                d.norms.wrap_diff_frob_sq_over_t.into(),
                d.trace_gaps[0].into(),
                d.trace_gaps[1].into(),
                d.trace_gaps[2].into(),
                d.trace_gaps[3].into(),
                d.psd_sup_error.into(),
            ]);
        }
        t
    }

    /// Per-point equivalence diagnostics, with the log-det and spectral
    /// integral reported without the factor ½.
    pub fn equivalence_table(&self) -> Table {
        let mut t = Table::new(&[
            "T",
            "n",
            "h",
            "eigenRate",
            "logdetGapOverT",
            "logdetOverT",
            "spectralIntegral",
            "absGammaSum",
            "opNormBound",
            "maxAbsCircEig",
            "frobSqOverT",
            "circFrobSqOverT",
            "wrapDiffFrobSqOverT",
            "traceGap_k1",
            "traceGap_k2",
            "traceGap_k3",
            "traceGap_k4",
            "eigPsdSupErr",
        ]);
        for r in &self.rows {
            let d = &r.diagnostics;
            t.push(vec![
                d.point.horizon.into(),
                d.point.samples.into(),
                d.point.step().into(),
                d.eigen_rate.into(),
                d.logdet_gap_over_t().into(),
                (2.0 * d.sampled_rate).into(),
                self.spectral_integral().into(),
                d.abs_gamma_sum.into(),
                d.norms.op_norm_bound.into(),
                d.max_abs_circulant_eig().into(),
                d.norms.frob_sq_over_t.into(),
                d.norms.circulant_frob_sq_over_t.into(),
                d.norms.wrap_diff_frob_sq_over_t.into(),
                d.trace_gaps[0].into(),
                d.trace_gaps[1].into(),
                d.trace_gaps[2].into(),
                d.trace_gaps[3].into(),
                d.psd_sup_error.into(),
            ]);
        }
        t
    }

    pub fn violations(&self) -> Vec<String> {
        self.rows
            .iter()
            .flat_map(|r| {
                let p = r.diagnostics.point;
                r.diagnostics
                    .violations(&self.model)
                    .into_iter()
                    .map(move |v| format!("T={} n={}: {v}", p.horizon, p.samples))
            })
            .collect()
    }
}

/// Runs [`study_point`] over the schedule (points in parallel, rows in
/// schedule order) and compares against the spectral target.
pub fn rate_convergence(model: &SpectralModel, schedule: &ConvergenceSchedule, tol: f64) -> Result<RateReport> {
    model.validate()?;
    let target_rate = 0.5 * model.spectral_functional(Functional::Log1p, tol)?;
    let studies = par::map_slice(schedule.points(), |&p| study_point(model, p));
    let rows = studies
        .into_iter()
        .map(|d| {
            let d = d?;
            let abs_err = (d.sampled_rate - target_rate).abs();
            let rel_err = if target_rate > 0.0 {
                abs_err / target_rate
            } else if abs_err == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(RateRow { diagnostics: d, abs_err, rel_err })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RateReport { model: *model, target_rate, rows })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityRow {
    pub samples: usize,
    pub step: f64,
    /// `½ log det(I + A_{T,n})`.
    pub mutual_information: f64,
    /// `MI(n) - MI(n/2)`; absent for the first row.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityTable {
    pub horizon: f64,
    pub correlation_time: f64,
    pub rows: Vec<StabilityRow>,
}

impl StabilityTable {
    pub fn mi_nondecreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].mutual_information >= w[0].mutual_information)
    }

    pub fn gaps_strictly_decreasing(&self) -> bool {
        let gaps: Vec<f64> = self.rows.iter().filter_map(|r| r.gap.map(f64::abs)).collect();
        gaps.windows(2).all(|w| w[1] < w[0])
    }

    /// Gaps non-increasing among rows whose step resolves a quarter of the
    /// correlation time.
    pub fn resolved_gaps_nonincreasing(&self) -> bool {
        let gaps: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.step < self.correlation_time / 4.0)
            .filter_map(|r| r.gap.map(f64::abs))
            .collect();
        gaps.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["T", "n", "h", "mutualInformation", "gap"]);
        for r in &self.rows {
            t.push(vec![
                self.horizon.into(),
                r.samples.into(),
                r.step.into(),
                r.mutual_information.into(),
                r.gap.map_or(crate::report::Cell::Text("-".into()), Into::into),
            ]);
        }
        t
    }
}

/// Mutual information on nested grids `n, 2n, 4n, …` at a fixed horizon.
pub fn refinement_stability(model: &SpectralModel, horizon: f64, samples: &[usize]) -> Result<StabilityTable> {
    model.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one sample count".into()));
    }
    if let Some(w) = samples.windows(2).find(|w| w[1] != 2 * w[0]) {
        return Err(Error::InvalidArgument(format!(
            "sample counts must double for nested grids ({} then {})",
            w[0], w[1]
        )));
    }
    let mis = par::map_slice(samples, |&n| -> Result<f64> {
        let grid = SamplingGrid::new(horizon, n)?;
        let gs = gamma_sequence(model, &grid)?;
        mi_logdet(&gs.toeplitz_matrix()).map_err(|e| e.at_point(horizon, n))
    });
    let mut rows = Vec::with_capacity(samples.len());
    let mut prev: Option<f64> = None;
    for (&n, mi) in samples.iter().zip(mis) {
        let mi = mi?;
        rows.push(StabilityRow {
            samples: n,
            step: horizon / n as f64,
            mutual_information: mi,
            gap: prev.map(|p| mi - p),
        });
        prev = Some(mi);
    }
    Ok(StabilityTable { horizon, correlation_time: model.correlation_time(), rows })
}

/// Number of points in the verification grid over `[0, C]`.
pub const SANDWICH_GRID: usize = 10_000;

/// Polynomials `p₁ <= log(1 + x) <= p₂` on `[0, C]` with
/// `p₂ - p₁ <= 2 ε̂ x`, built from the Bernstein polynomial `B_d` of
/// `g(x) = log(1 + x)/x`: `p_{1,2}(x) = x (B_d(x) ∓ ε̂)`.
///
/// Both are stored as degree `d + 1` Bernstein coefficients on `[0, C]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SandwichPair {
    pub degree: usize,
    pub domain_max: f64,
    pub base: Vec<f64>,
    pub eps_hat: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn log1p_over_x(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        x.ln_1p() / x
    }
}

/// de Casteljau evaluation of a Bernstein polynomial at `t`.
fn de_casteljau(coeffs: &[f64], t: f64) -> f64 {
    let mut b = coeffs.to_vec();
    let n = b.len();
    for r in 1..n {
        for i in 0..n - r {
            b[i] = (1.0 - t) * b[i] + t * b[i + 1];
        }
    }
    b[0]
}

impl SandwichPair {
    pub fn base_at(&self, x: f64) -> f64 {
        de_casteljau(&self.base, x / self.domain_max)
    }

    pub fn lower_at(&self, x: f64) -> f64 {
        de_casteljau(&self.lower, x / self.domain_max)
    }

    pub fn upper_at(&self, x: f64) -> f64 {
        de_casteljau(&self.upper, x / self.domain_max)
    }

    fn grid_point(&self, i: usize) -> f64 {
        self.domain_max * i as f64 / (SANDWICH_GRID - 1) as f64
    }

    /// Checks both sandwich invariants on the verification grid.
    pub fn verify(&self) -> Result<()> {
        let bad = par::map_indexed(SANDWICH_GRID, |i| {
            let x = self.grid_point(i);
            let (lo, hi, f) = (self.lower_at(x), self.upper_at(x), x.ln_1p());
            let width_ok = hi - lo <= 2.0 * self.eps_hat * x * (1.0 + 1e-12) + 1e-15;
            if lo <= f && f <= hi && width_ok {
                None
            } else {
                Some(x)
            }
        })
        .into_iter()
        .flatten()
        .next();
        match bad {
            Some(x) => Err(Error::DegreeTooLow { degree: self.degree, x }),
            None => Ok(()),
        }
    }

    /// Largest `(p₂ - p₁)(x)/x` over the verification grid (excluding 0).
    pub fn max_relative_width(&self) -> f64 {
        par::max_indexed(SANDWICH_GRID - 1, |i| {
            let x = self.grid_point(i + 1);
            (self.upper_at(x) - self.lower_at(x)) / x
        })
    }
}

/// Builds and verifies the sandwich pair for `[0, C]` and Bernstein degree `d`.
pub fn sandwich_polynomials(domain_max: f64, degree: usize) -> Result<SandwichPair> {
    if !(domain_max > 0.0 && domain_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("domain max must be > 0, got {domain_max}")));
    }
    if degree < 1 {
        return Err(Error::InvalidArgument("Bernstein degree must be >= 1".into()));
    }
    let d = degree as f64;
    let base: Vec<f64> = (0..=degree).map(|k| log1p_over_x(k as f64 * domain_max / d)).collect();
    let mut pair = SandwichPair { degree, domain_max, base, eps_hat: 0.0, lower: Vec::new(), upper: Vec::new() };
    let sup = par::max_indexed(SANDWICH_GRID, |i| {
        let x = pair.grid_point(i);
        (pair.base_at(x) - log1p_over_x(x)).abs()
    });
    // Padded by a rounding margin so the grid argmax itself stays inside.
    pair.eps_hat = sup * (1.0 + 1e-9) + 4.0 * f64::EPSILON;
    let elevated = |shift: f64| -> Vec<f64> {
        std::iter::once(0.0)
            .chain((1..=degree + 1).map(|j| domain_max * j as f64 / (d + 1.0) * (pair.base[j - 1] + shift)))
            .collect()
    };
    pair.lower = elevated(-pair.eps_hat);
    pair.upper = elevated(pair.eps_hat);
    pair.verify()?;
    Ok(pair)
}

/// Absolute slack below zero tolerated for eigenvalues fed to the sandwich.
pub const SANDWICH_NEGATIVE_SLACK: f64 = 1e-9;

/// `(Σ p₁(ψ_m)/T, Σ p₂(ψ_m)/T)`.
pub fn sandwich_rate_bounds(pair: &SandwichPair, spectrum: &SpectrumResult, horizon: f64) -> Result<(f64, f64)> {
    let ev = &spectrum.eigenvalues;
    if let Some(&x) = ev.iter().find(|&&x| x > pair.domain_max || x < -SANDWICH_NEGATIVE_SLACK) {
        return Err(Error::DomainExceeded { value: x, lower: -SANDWICH_NEGATIVE_SLACK, upper: pair.domain_max });
    }
    let lower = par::sum_indexed(ev.len(), |m| pair.lower_at(ev[m])) / horizon;
    let upper = par::sum_indexed(ev.len(), |m| pair.upper_at(ev[m])) / horizon;
    Ok((lower, upper))
}

/// Sandwich bracket for both spectra at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichRow {
    pub point: SchedulePoint,
    pub toeplitz_value: f64,
    pub toeplitz_bounds: (f64, f64),
    pub circulant_value: f64,
    pub circulant_bounds: (f64, f64),
}

impl SandwichRow {
    pub fn contains(&self) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| lo <= v && v <= hi;
        inside(self.toeplitz_value, self.toeplitz_bounds) && inside(self.circulant_value, self.circulant_bounds)
    }

    pub fn from_diagnostics(pair: &SandwichPair, d: &PointDiagnostics) -> Result<Self> {
        let t = d.point.horizon;
        Ok(Self {
            point: d.point,
            toeplitz_value: d.toeplitz.log1p_sum() / t,
            toeplitz_bounds: sandwich_rate_bounds(pair, &d.toeplitz, t)?,
            circulant_value: d.circulant.log1p_sum() / t,
            circulant_bounds: sandwich_rate_bounds(pair, &d.circulant, t)?,
        })
    }
}

pub fn sandwich_table(rows: &[SandwichRow]) -> Table {
    let mut t = Table::new(&[
        "T",
        "n",
        "toeplitzLower",
        "toeplitzLog1pSumOverT",
        "toeplitzUpper",
        "circulantLower",
        "circulantLog1pSumOverT",
        "circulantUpper",
        "contains",
    ]);
    for r in rows {
        t.push(vec![
            r.point.horizon.into(),
            r.point.samples.into(),
            r.toeplitz_bounds.0.into(),
            r.toeplitz_value.into(),
            r.toeplitz_bounds.1.into(),
            r.circulant_bounds.0.into(),
            r.circulant_value.into(),
            r.circulant_bounds.1.into(),
            r.contains().into(),
        ]);
    }
    t
}

/// Both sides of `Σ ψ̂_m^q / T → (1/2π) ∫ (2πf)^q` and the split of the
/// left side into the convolution part `S₁` and the wrap remainder `S₂`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSumCheck {
    pub q: u32,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    /// `n S₁ / T` with `S₁ = Σ_{j₁+…+j_q=0} γ_{j₁}⋯γ_{j_q}`, `|j_i| < n`.
    pub s1: f64,
    /// `n S₂ / T`; for `q = 2` this is `2n Σ_{l=1}^{n-1} γ_l γ_{n-l} / T`,
    /// otherwise the remainder `lhs - s1`.
    pub s2: f64,
}

pub const MAX_POWER: u32 = 4;

pub fn power_sum_check(model: &SpectralModel, horizon: f64, samples: usize, q: u32, tol: f64) -> Result<PowerSumCheck> {
    if !(1..=MAX_POWER).contains(&q) {
        return Err(Error::InvalidArgument(format!("power q must be in 1..={MAX_POWER}, got {q}")));
    }
    let grid = SamplingGrid::new(horizon, samples)?;
    let gs = gamma_sequence(model, &grid)?;
    let dft = circulant_dft(gs.circulant_row())?;
    let lhs = trace_power_spectrum(&dft, q) / horizon;
    let rhs = model.spectral_functional(Functional::Monomial(q), tol)?;
    let scale = samples as f64 / horizon;
    let g = gs.gamma();
    let s1 = scale * convolution_power_at_zero(g, q);
    let s2 = if q == 2 {
        let n = samples;
        scale * 2.0 * par::sum_indexed(n.saturating_sub(1), |i| g[i + 1] * g[n - i - 1])
    } else {
        lhs - s1
    };
    Ok(PowerSumCheck { q, lhs, rhs, gap: (lhs - rhs).abs(), s1, s2 })
}

/// `(γ * ⋯ * γ)(0)` (q-fold) over the symmetric sequence `γ_{-(n-1)..n-1}`.
fn convolution_power_at_zero(g: &[f64], q: u32) -> f64 {
    let n = g.len();
    let at = |j: isize| -> f64 {
        let a = j.unsigned_abs();
        if a < n {
            g[a]
        } else {
            0.0
        }
    };
    match q {
        1 => g[0],
        2 => g[0] * g[0] + 2.0 * g[1..].iter().map(|x| x * x).sum::<f64>(),
        _ => {
            // (γ*γ)(j) for j >= 0; it is even in j.
            let span = 2 * (n - 1);
            let conv2 = par::map_indexed(span + 1, |j| {
                let j = j as isize;
                let lo = (j - (n as isize - 1)).max(-(n as isize - 1));
                let hi = (n as isize - 1).min(j + n as isize - 1);
                (lo..=hi).map(|i| at(i) * at(j - i)).sum::<f64>()
            });
            let c = |j: isize| conv2[j.unsigned_abs()];
            if q == 3 {
                let m = n as isize - 1;
                (-m..=m).map(|j| c(j) * at(-j)).sum()
            } else {
                let m = span as isize;
                (-m..=m).map(|j| c(j) * c(-j)).sum()
            }
        }
    }
}

pub fn power_sum_table(rows: &[PowerSumCheck], horizon: f64, samples: usize) -> Table {
    let mut t = Table::new(&["T", "n", "q", "lhs", "rhs", "gap", "s1", "s2"]);
    for r in rows {
        t.push(vec![
            horizon.into(),
            samples.into(),
            r.q.into(),
            r.lhs.into(),
            r.rhs.into(),
            r.gap.into(),
            r.s1.into(),
            r.s2.into(),
        ]);
    }
    t
}

/// Direct `(1/2π) ∫ (2πf)^q` lookup used by callers that only need the limit.
pub fn power_limit(model: &SpectralModel, q: u32, tol: f64) -> Result<f64> {
    model.spectral_functional(Functional::Monomial(q), tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou11() -> SpectralModel {
        SpectralModel::ornstein_uhlenbeck(1.0, 1.0).unwrap()
    }

    #[test]
    fn schedule_validation() {
        assert!(ConvergenceSchedule::new(vec![]).is_err());
        assert!("25:500,50:1000".parse::<ConvergenceSchedule>().is_ok());
        assert!("50:1000,25:500".parse::<ConvergenceSchedule>().is_err());
        assert!("25:500,50:500".parse::<ConvergenceSchedule>().is_err());
        assert!("25:1".parse::<ConvergenceSchedule>().is_err());
        assert!("25-500".parse::<ConvergenceSchedule>().is_err());
        let d = ConvergenceSchedule::default();
        let pts: Vec<(f64, usize)> = d.points().iter().map(|p| (p.horizon, p.samples)).collect();
        assert_eq!(pts, vec![(25.0, 500), (50.0, 1000), (100.0, 2000)]);
    }

    #[test]
    fn zero_power_gives_zero_rates() {
        let m = SpectralModel::ornstein_uhlenbeck(0.0, 1.0).unwrap();
        let s: ConvergenceSchedule = "5:20,10:40".parse().unwrap();
        let r = rate_convergence(&m, &s, 1e-8).unwrap();
        for row in &r.rows {
            let d = &row.diagnostics;
            assert_eq!((d.sampled_rate, d.circulant_rate, d.eigen_rate), (0.0, 0.0, 0.0));
            assert_eq!((row.abs_err, row.rel_err), (0.0, 0.0));
        }
        assert!(r.violations().is_empty());
    }

    #[test]
    fn rate_errors_shrink_when_step_and_horizon_both_refine() {
        let s: ConvergenceSchedule = "10:100,20:400,40:1600".parse().unwrap();
        let r = rate_convergence(&ou11(), &s, 1e-8).unwrap();
        let errs: Vec<f64> = r.rows.iter().map(|x| x.rel_err).collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        assert!(r.violations().is_empty(), "{:?}", r.violations());
    }

    #[test]
    fn rate_table_has_fixed_columns() {
        let s: ConvergenceSchedule = "5:50,10:100".parse().unwrap();
        let r = rate_convergence(&ou11(), &s, 1e-8).unwrap();
        let t = r.to_table();
        assert_eq!(t.columns().len(), 14);
        assert_eq!(t.columns()[0], "T");
        assert_eq!(t.columns()[13], "eigPsdSupErr");
        assert_eq!(t.rows().len(), 2);
        assert!((r.spectral_integral() - (3f64.sqrt() - 1.0)).abs() < 1e-8);
    }

    #[test]
    fn study_errors_carry_the_point() {
        let bad = SchedulePoint { horizon: -1.0, samples: 4 };
        let err = study_point(&ou11(), bad).unwrap_err();
        assert!(matches!(err, Error::AtPoint { samples: 4, .. }));
    }

    #[test]
    fn refinement_examples() {
        let t = refinement_stability(&ou11(), 10.0, &[50, 100, 200, 400]).unwrap();
        assert!(t.mi_nondecreasing());
        assert!(t.gaps_strictly_decreasing());
        assert!(t.resolved_gaps_nonincreasing());
        let z = refinement_stability(&SpectralModel::triangular(0.0, 1.0).unwrap(), 10.0, &[10, 20, 40]).unwrap();
        assert!(z.rows.iter().all(|r| r.mutual_information == 0.0 && r.gap.unwrap_or(0.0) == 0.0));
        assert!(refinement_stability(&ou11(), 10.0, &[50, 120]).is_err());
    }

    #[test]
    fn sandwich_basic_properties() {
        let pair = sandwich_polynomials(4.0, 64).unwrap();
        assert_eq!(pair.lower_at(0.0), 0.0);
        assert_eq!(pair.upper_at(0.0), 0.0);
        assert!(pair.eps_hat <= 0.01, "eps_hat = {}", pair.eps_hat);
        assert!((pair.max_relative_width() - 2.0 * pair.eps_hat).abs() < 1e-10);
        assert_eq!(pair.lower.len(), 66);
    }

    #[test]
    fn sandwich_detects_a_broken_pair() {
        let mut pair = sandwich_polynomials(4.0, 8).unwrap();
        let shrink = 0.5 * pair.eps_hat;
        let d = pair.degree as f64;
        for j in 1..pair.lower.len() {
            pair.lower[j] += pair.domain_max * j as f64 / (d + 1.0) * shrink;
        }
        assert!(matches!(pair.verify(), Err(Error::DegreeTooLow { degree: 8, .. })));
    }

    #[test]
    fn sandwich_bounds_bracket_and_width() {
        let pair = sandwich_polynomials(4.0, 64).unwrap();
        let grid = SamplingGrid::new(50.0, 1000).unwrap();
        let zero = SpectrumResult { source: SpectrumSource::Toeplitz, eigenvalues: vec![0.0; 10], grid };
        assert_eq!(sandwich_rate_bounds(&pair, &zero, 50.0).unwrap(), (0.0, 0.0));

        let d = study_point(&ou11(), SchedulePoint { horizon: 50.0, samples: 1000 }).unwrap();
        let row = SandwichRow::from_diagnostics(&pair, &d).unwrap();
        assert!(row.contains());
        let (lo, hi) = row.toeplitz_bounds;
        let tr_over_t = d.toeplitz.eigenvalues.iter().sum::<f64>() / 50.0;
        assert!(hi - lo <= 2.0 * pair.eps_hat * tr_over_t * (1.0 + 1e-9));
        assert!((row.circulant_value - 2.0 * d.circulant_rate).abs() < 1e-12);
    }

    #[test]
    fn sandwich_rejects_out_of_domain_spectrum() {
        let pair = sandwich_polynomials(1.0, 8).unwrap();
        let grid = SamplingGrid::new(1.0, 2).unwrap();
        let s = SpectrumResult { source: SpectrumSource::Circulant, eigenvalues: vec![0.5, 1.5], grid };
        assert!(matches!(sandwich_rate_bounds(&pair, &s, 1.0), Err(Error::DomainExceeded { .. })));
    }

    #[test]
    fn power_sum_limits() {
        let m = ou11();
        let c2 = power_sum_check(&m, 20.0, 400, 2, 1e-10).unwrap();
        assert!((c2.rhs - 1.0).abs() < 1e-9);
        assert!(((c2.s1 + c2.s2) - c2.lhs).abs() < 1e-10 * c2.lhs);
        let c3 = power_sum_check(&m, 20.0, 400, 3, 1e-10).unwrap();
        assert!((c3.rhs - 1.5).abs() < 1e-9);
        assert!(power_sum_check(&m, 20.0, 400, 5, 1e-8).is_err());
        assert!(power_sum_check(&m, 20.0, 400, 0, 1e-8).is_err());
    }

    #[test]
    fn convolution_power_matches_brute_force() {
        let g = [0.9, 0.4, -0.2, 0.05, 0.01];
        let n = g.len() as isize;
        let at = |j: isize| if j.abs() < n { g[j.unsigned_abs()] } else { 0.0 };
        let r = -(n - 1)..=(n - 1);
        let mut b3 = 0.0;
        let mut b4 = 0.0;
        for a in r.clone() {
            for b in r.clone() {
                b3 += at(a) * at(b) * at(-(a + b));
                for c in r.clone() {
                    b4 += at(a) * at(b) * at(c) * at(-(a + b + c));
                }
            }
        }
        assert!((convolution_power_at_zero(&g, 3) - b3).abs() < 1e-14);
        assert!((convolution_power_at_zero(&g, 4) - b4).abs() < 1e-14);
    }

    #[test]
    fn cross_term_shrinks_with_horizon_at_fixed_step() {
        let m = ou11();
        let a = power_sum_check(&m, 10.0, 200, 2, 1e-8).unwrap();
        let b = power_sum_check(&m, 20.0, 400, 2, 1e-8).unwrap();
        let c = power_sum_check(&m, 40.0, 800, 2, 1e-8).unwrap();
        assert!(a.s2 > b.s2 && b.s2 > c.s2, "{} {} {}", a.s2, b.s2, c.s2);
    }
}
