mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use szgl_core::gram::{gamma_sequence, SamplingGrid};
use szgl_core::mc::{empirical_gram, noise_variance_ratio, sample_paths, write_batch};
use szgl_core::report::{format_sig9, Table};
use szgl_core::spectra::{circulant_dft, psd_at_dft_index, toeplitz_eigs, SpectrumSource};
use szgl_core::szego::{
    power_sum_check, power_sum_table, rate_convergence, sandwich_polynomials, sandwich_table, RateReport, SandwichRow,
};
use szgl_core::Error;

use config::{Cli, RunConfig, Task, UsageError};

const EXIT_INVARIANT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Lags compared against their analytic values in `mc-validate`.
const MC_LAGS: [usize; 4] = [0, 1, 2, 5];

enum RunError {
    Usage(UsageError),
    Core(Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        RunError::Core(e)
    }
}

impl From<UsageError> for RunError {
    fn from(e: UsageError) -> Self {
        RunError::Usage(e)
    }
}

fn configure_threads() -> Result<(), UsageError> {
    let Ok(raw) = std::env::var("SZGL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| UsageError(format!("SZGL_THREADS must be a non-negative integer, got `{raw}`")))?;
    #[cfg(feature = "parallel")]
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("SZGL_THREADS: {e}")))?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn emit(cfg: &RunConfig, tables: &[Table]) -> Result<(), RunError> {
    let mut out: Box<dyn Write> = match &cfg.out {
        None => Box::new(BufWriter::new(io::stdout().lock())),
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| UsageError(format!("--out {}: {e}", path.display())))?,
        )),
    };
    for (i, t) in tables.iter().enumerate() {
        if i > 0 {
            writeln!(out).map_err(Error::from)?;
        }
        t.write(&mut out, cfg.format)?;
    }
    out.flush().map_err(Error::from)?;
    Ok(())
}

fn summarize_rates(report: &RateReport) {
    for r in &report.rows {
        let d = &r.diagnostics;
        eprintln!(
            "T={} n={} h={} sampledRate={} circulantRate={} relErr={}",
            d.point.horizon,
            d.point.samples,
            d.point.step(),
            format_sig9(d.sampled_rate),
            format_sig9(d.circulant_rate),
            format_sig9(r.rel_err)
        );
    }
}

/// Runs the task and returns any invariant violations found on the way.
fn run(cfg: &RunConfig) -> Result<Vec<String>, RunError> {
    let model = &cfg.model;
    match &cfg.task {
        Task::Rate { schedule } | Task::Equivalence { schedule } => {
            let report = rate_convergence(model, schedule, cfg.tol)?;
            summarize_rates(&report);
            let table = match cfg.task {
                Task::Rate { .. } => report.to_table(),
                _ => report.equivalence_table(),
            };
            emit(cfg, &[table])?;
            Ok(report.violations())
        }
        Task::PowerSum { point, powers } => {
            let mut rows = Vec::new();
            let mut violations = Vec::new();
            for &q in powers {
                let c = power_sum_check(model, point.horizon, point.samples, q, cfg.tol)?;
                eprintln!(
                    "T={} n={} q={q} lhs={} rhs={} gap={}",
                    point.horizon,
                    point.samples,
                    format_sig9(c.lhs),
                    format_sig9(c.rhs),
                    format_sig9(c.gap)
                );
                if q == 2 && (c.s1 + c.s2 - c.lhs).abs() > 1e-9 * c.lhs.abs().max(1.0) {
                    violations.push(format!("q=2: S1 + S2 = {} differs from lhs {}", c.s1 + c.s2, c.lhs));
                }
                rows.push(c);
            }
            emit(cfg, &[power_sum_table(&rows, point.horizon, point.samples)])?;
            Ok(violations)
        }
        Task::Sandwich { schedule, degree, domain_max } => {
            let pair = sandwich_polynomials(*domain_max, *degree)?;
            let report = rate_convergence(model, schedule, cfg.tol)?;
            let mut rows = Vec::new();
            for r in &report.rows {
                let row = SandwichRow::from_diagnostics(&pair, &r.diagnostics)?;
                eprintln!(
                    "T={} n={} epsHat={} toeplitz=[{}, {}] contains={}",
                    row.point.horizon,
                    row.point.samples,
                    format_sig9(pair.eps_hat),
                    format_sig9(row.toeplitz_bounds.0),
                    format_sig9(row.toeplitz_bounds.1),
                    row.contains()
                );
                rows.push(row);
            }
            emit(cfg, &[sandwich_table(&rows)])?;
            Ok(rows
                .iter()
                .filter(|r| !r.contains())
                .map(|r| {
                    format!("T={} n={}: sandwich bracket does not contain the rate", r.point.horizon, r.point.samples)
                })
                .collect())
        }
        Task::McValidate { point, refine, paths, dump } => {
            let grid = point.grid()?;
            let batch = sample_paths(model, &grid, *refine, *paths, cfg.seed)?;
            if let Some(path) = dump {
                let file = File::create(path).map_err(|e| UsageError(format!("--dump {}: {e}", path.display())))?;
                let mut w = BufWriter::new(file);
                write_batch(&batch, &mut w)?;
                w.flush().map_err(Error::from)?;
            }
            let emp = empirical_gram(&batch)?;
            let analytic = gamma_sequence(model, &grid)?;
            let mut table = Table::new(&["lag", "gammaAnalytic", "gammaEmpirical", "stdErr", "zScore", "within3SE"]);
            let mut violations = Vec::new();
            for &l in MC_LAGS.iter().filter(|&&l| l < grid.samples()) {
                let (g, e, se) = (analytic.gamma()[l], emp.gamma[l], emp.std_err[l]);
                let z = if se > 0.0 {
                    (e - g) / se
                } else if e == g {
                    0.0
                } else {
                    f64::INFINITY
                };
                let ok = z.abs() <= 3.0;
                if !ok {
                    violations.push(format!("lag {l}: empirical {e} is {z:.2} standard errors from {g}"));
                }
                table.push(vec![l.into(), g.into(), e.into(), se.into(), z.into(), ok.into()]);
            }
            let ratio = noise_variance_ratio(&batch).unwrap_or(f64::NAN);
            if !(0.9..=1.1).contains(&ratio) {
                violations.push(format!("noise variance ratio {ratio} outside [0.9, 1.1]"));
            }
            eprintln!(
                "T={} n={} r={refine} N={paths} seed={} noiseVarianceRatio={} jitter={} generator={}",
                point.horizon,
                point.samples,
                cfg.seed,
                format_sig9(ratio),
                format_sig9(batch.jitter),
                batch.generator
            );
            emit(cfg, &[table])?;
            Ok(violations)
        }
        Task::DumpGram { point } => {
            let gs = gamma_sequence(model, &point.grid()?)?;
            eprintln!(
                "T={} n={} h={} gamma0={} sumAbsGamma={}",
                point.horizon,
                point.samples,
                point.step(),
                format_sig9(gs.gamma()[0]),
                format_sig9(gs.abs_sum())
            );
            emit(cfg, &[gs.to_table()])?;
            let bound = model.abs_acf_integral() + 1e-9;
            Ok(if gs.abs_sum() > bound {
                vec![format!("sum |gamma| = {} exceeds {bound}", gs.abs_sum())]
            } else {
                vec![]
            })
        }
        Task::DumpSpectrum { point, source } => {
            let grid: SamplingGrid = point.grid()?;
            let gs = gamma_sequence(model, &grid)?;
            let mut violations = Vec::new();
            let table = match source {
                SpectrumSource::Toeplitz => {
                    let spec = toeplitz_eigs(&gs.toeplitz_matrix(), grid)?;
                    if spec.min() < -1e-9 * gs.gamma()[0] {
                        violations.push(format!("Toeplitz eigenvalue {} below zero", spec.min()));
                    }
                    eprintln!(
                        "T={} n={} toeplitz min={} max={}",
                        point.horizon,
                        point.samples,
                        format_sig9(spec.min()),
                        format_sig9(spec.max())
                    );
                    let mut t = Table::new(&["index", "psi"]);
                    for (i, &v) in spec.eigenvalues.iter().enumerate() {
                        t.push(vec![i.into(), v.into()]);
                    }
                    t
                }
                SpectrumSource::Circulant => {
                    let dft = circulant_dft(gs.circulant_row())?;
                    let bound = 2.0 * model.abs_acf_integral() * (1.0 + szgl_core::szego::BOUND_SLACK);
                    if let Some(v) = dft.iter().find(|v| v.abs() > bound) {
                        violations.push(format!("|psi_hat| = {} exceeds {bound}", v.abs()));
                    }
                    eprintln!(
                        "T={} n={} circulant max|psiHat|={}",
                        point.horizon,
                        point.samples,
                        format_sig9(dft.iter().fold(0.0f64, |a, v| a.max(v.abs())))
                    );
                    let mut t = Table::new(&["m", "psiHat", "twoPiPsd"]);
                    for (m, &v) in dft.iter().enumerate() {
                        t.push(vec![m.into(), v.into(), psd_at_dft_index(model, m, &grid).into()]);
                    }
                    t
                }
            };
            emit(cfg, &[table])?;
            Ok(violations)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("szgl: usage error: {e}");
        return ExitCode::from(EXIT_USAGE);
    }
    let cfg = match config::resolve(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("szgl: usage error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(&cfg) {
        Ok(violations) if violations.is_empty() => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in &violations {
                eprintln!("szgl: invariant violated: {v}");
            }
            ExitCode::from(EXIT_INVARIANT)
        }
        Err(RunError::Usage(e)) => {
            eprintln!("szgl: usage error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(RunError::Core(e)) => {
            let code = if e.is_numerical() || matches!(e, Error::Io(_)) { EXIT_NUMERICAL } else { EXIT_USAGE };
            eprintln!("szgl: error: {e}");
            ExitCode::from(code)
        }
    }
}
