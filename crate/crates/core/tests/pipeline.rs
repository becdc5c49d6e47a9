//! End-to-end properties of the convergence study on OU(1,1).

use std::sync::OnceLock;
use szgl_core::gram::{gamma_sequence, SamplingGrid};
use szgl_core::models::SpectralModel;
use szgl_core::spectra::{circulant_dft, psd_at_dft_index};
use szgl_core::szego::{
    power_sum_check, rate_convergence, sandwich_polynomials, sandwich_rate_bounds, ConvergenceSchedule, RateReport,
    SandwichRow,
};

fn ou11() -> SpectralModel {
    SpectralModel::ornstein_uhlenbeck(1.0, 1.0).unwrap()
}

fn default_report() -> &'static RateReport {
    static REPORT: OnceLock<RateReport> = OnceLock::new();
    REPORT.get_or_init(|| rate_convergence(&ou11(), &ConvergenceSchedule::default(), 1e-10).unwrap())
}

#[test]
fn relative_errors_meet_the_per_point_budgets() {
    let r = default_report();
    let budgets = [0.15, 0.08, 0.05];
    for (row, b) in r.rows.iter().zip(budgets) {
        assert!(row.rel_err < b, "T={}: {}", row.diagnostics.point.horizon, row.rel_err);
    }
    assert!(r.violations().is_empty(), "{:?}", r.violations());
}

#[test]
fn toeplitz_and_circulant_log_dets_converge_together() {
    let gaps: Vec<f64> = default_report().rows.iter().map(|r| r.diagnostics.logdet_gap_over_t()).collect();
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
    assert!(*gaps.last().unwrap() < 0.01);
}

#[test]
fn trace_gaps_shrink_along_the_schedule() {
    let r = default_report();
    assert!(r.rows.iter().all(|x| x.diagnostics.trace_gaps[0] == 0.0));
    for k in 1..4 {
        let g: Vec<f64> = r.rows.iter().map(|x| x.diagnostics.trace_gaps[k]).collect();
        assert!(g.windows(2).all(|w| w[1] < w[0]), "k={}: {g:?}", k + 1);
    }
}

#[test]
fn every_spectrum_is_bracketed_by_the_sandwich() {
    let r = default_report();
    let pair = sandwich_polynomials(2.0 * ou11().abs_acf_integral(), 64).unwrap();
    for row in &r.rows {
        let s = SandwichRow::from_diagnostics(&pair, &row.diagnostics).unwrap();
        assert!(s.contains(), "{s:?}");
        let (lo, hi) = s.circulant_bounds;
        assert!(lo <= 2.0 * row.diagnostics.circulant_rate && 2.0 * row.diagnostics.circulant_rate <= hi);
    }
}

#[test]
fn bracket_width_is_bounded_by_the_trace() {
    let pair = sandwich_polynomials(4.0, 64).unwrap();
    let d = &default_report().rows[1].diagnostics;
    let (lo, hi) = sandwich_rate_bounds(&pair, &d.toeplitz, 50.0).unwrap();
    let grid = SamplingGrid::new(50.0, 1000).unwrap();
    let gamma0 = gamma_sequence(&ou11(), &grid).unwrap().gamma()[0];
    assert!(hi - lo <= 2.0 * pair.eps_hat * gamma0 * 1000.0 / 50.0 * (1.0 + 1e-9));
}

#[test]
fn cross_term_vanishes_and_limits_are_reached() {
    let mut prev = f64::INFINITY;
    for (t, n) in [(25.0, 1000), (50.0, 2000), (100.0, 4000)] {
        let c = power_sum_check(&ou11(), t, n, 2, 1e-10).unwrap();
        assert!(c.s2 < prev);
        prev = c.s2;
    }
    let c = power_sum_check(&ou11(), 100.0, 4000, 2, 1e-10).unwrap();
    assert!(c.gap < 0.02 && c.s2 < 0.005);
    let c4 = power_sum_check(&ou11(), 100.0, 4000, 4, 1e-10).unwrap();
    // (1/2π)∫(2/(1+λ²))⁴ dλ = 16 · (5/16) = 2.5
    assert!((c4.rhs - 2.5).abs() < 1e-8);
    assert!(c4.gap / c4.rhs < 0.03);
}

#[test]
fn circulant_eigenvalues_follow_the_psd_at_every_frequency() {
    let grid = SamplingGrid::new(100.0, 4000).unwrap();
    let gs = gamma_sequence(&ou11(), &grid).unwrap();
    let dft = circulant_dft(gs.circulant_row()).unwrap();
    for (m, v) in dft.iter().enumerate() {
        assert!((v - psd_at_dft_index(&ou11(), m, &grid)).abs() < 0.05);
    }
}
