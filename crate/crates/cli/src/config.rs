//! Command-line and config-file handling. Flags override `key = value`
//! entries from `--config`, which override built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use szgl_core::gram::SamplingGrid;
use szgl_core::mc::{MIN_PATHS_FOR_GRAM, MIN_REFINE};
use szgl_core::report::Format;
use szgl_core::spectra::SpectrumSource;
use szgl_core::szego::{ConvergenceSchedule, SchedulePoint, MAX_POWER};
use szgl_core::SpectralModel;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "szgl", version, about = "Sampled Gaussian channel rate and Toeplitz/circulant spectral studies")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// Flat `key = value` file; keys are the long flag names.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Autocorrelation model: ou, gaussian or triangular.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Input power P = R(0).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub power: Option<f64>,
    /// OU decay rate α.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub rate_param: Option<f64>,
    /// Gaussian kernel width σ.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub width: Option<f64>,
    /// Triangular support τ₀.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub support: Option<f64>,
    /// Model as JSON, e.g. '{"kind":"ou","power":1,"rate":1}'.
    #[arg(long, global = true)]
    pub model_spec: Option<String>,
    /// Relative tolerance of the spectral integrals.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// text (aligned) or csv.
    #[arg(long, global = true)]
    pub format: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sampled and circulant rates against the spectral target over a schedule.
    Rate(ScheduleArgs),
    /// Toeplitz/circulant equivalence diagnostics over a schedule.
    Equivalence(ScheduleArgs),
    /// Circulant eigenvalue power sums against their spectral limits.
    PowerSum(PowerSumArgs),
    /// Polynomial bracket of the log-determinant rate.
    Sandwich(SandwichArgs),
    /// Monte-Carlo check of the Gram coefficients.
    McValidate(McArgs),
    /// Print γ_l and γ̂_l for one grid.
    DumpGram(PointArgs),
    /// Print the Toeplitz or circulant spectrum for one grid.
    DumpSpectrum(SpectrumArgs),
}

#[derive(Debug, Default, Args)]
pub struct ScheduleArgs {
    /// `T:n[,T:n...]`.
    #[arg(long)]
    pub schedule: Option<String>,
}

#[derive(Debug, Default, Args)]
pub struct PointArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct PowerSumArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Power q in 1..=4; all four when omitted.
    #[arg(long)]
    pub q: Option<u32>,
}

#[derive(Debug, Default, Args)]
pub struct SandwichArgs {
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Bernstein degree d.
    #[arg(long)]
    pub degree: Option<usize>,
    /// Domain [0, C]; defaults to 2∫|R|.
    #[arg(long, allow_negative_numbers = true)]
    pub domain_max: Option<f64>,
}

#[derive(Debug, Default, Args)]
pub struct McArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// Sub-steps per sampling cell.
    #[arg(long)]
    pub refine: Option<usize>,
    /// Number of sample paths N.
    #[arg(long)]
    pub paths: Option<usize>,
    /// Write the sampled batch as a binary table.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Debug, Default, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub point: PointArgs,
    /// toeplitz or circulant.
    #[arg(long)]
    pub source: Option<String>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "model",
    "power",
    "rate-param",
    "width",
    "support",
    "model-spec",
    "tol",
    "seed",
    "out",
    "format",
    "schedule",
    "horizon",
    "samples",
    "q",
    "degree",
    "domain-max",
    "refine",
    "paths",
    "dump",
    "source",
];

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_POINT: SchedulePoint = SchedulePoint { horizon: 100.0, samples: 2000 };
pub const DEFAULT_MC_POINT: SchedulePoint = SchedulePoint { horizon: 10.0, samples: 100 };
pub const DEFAULT_REFINE: usize = 8;
pub const DEFAULT_PATHS: usize = 10_000;
pub const DEFAULT_DEGREE: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Rate { schedule: ConvergenceSchedule },
    Equivalence { schedule: ConvergenceSchedule },
    PowerSum { point: SchedulePoint, powers: Vec<u32> },
    Sandwich { schedule: ConvergenceSchedule, degree: usize, domain_max: f64 },
    McValidate { point: SchedulePoint, refine: usize, paths: usize, dump: Option<PathBuf> },
    DumpGram { point: SchedulePoint },
    DumpSpectrum { point: SchedulePoint, source: SpectrumSource },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: SpectralModel,
    pub tol: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub task: Task,
}

/// Parses a flat `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) =
            line.split_once('=').ok_or_else(|| usage(format!("config line {}: expected `key = value`", i + 1)))?;
        let key = k.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(usage(format!("config line {}: unknown key `{key}`", i + 1)));
        }
        map.insert(key, v.trim().to_string());
    }
    Ok(map)
}

struct Layers {
    file: BTreeMap<String, String>,
}

impl Layers {
    /// The flag if given, otherwise the parsed file entry.
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, UsageError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => {
                v.parse().map(Some).map_err(|_| usage(format!("invalid value `{v}` for `{key}` in config file")))
            }
        }
    }
}

fn model_from_json(text: &str) -> Result<SpectralModel, UsageError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| usage(format!("--model-spec is not valid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| usage("--model-spec must be a JSON object"))?;
    let kind = obj.get("kind").and_then(|k| k.as_str()).ok_or_else(|| usage("--model-spec needs a string `kind`"))?;
    let mut params = BTreeMap::new();
    for (k, v) in obj.iter().filter(|(k, _)| *k != "kind") {
        let x = v.as_f64().ok_or_else(|| usage(format!("--model-spec: `{k}` must be a number")))?;
        params.insert(k.clone(), x);
    }
    SpectralModel::from_params(kind, &params).map_err(|e| usage(format!("--model-spec: {e}")))
}

fn resolve_model(c: &CommonArgs, l: &Layers) -> Result<SpectralModel, UsageError> {
    let kind = l.get(c.model.clone(), "model")?;
    let power = l.get(c.power, "power")?;
    let rate = l.get(c.rate_param, "rate-param")?;
    let width = l.get(c.width, "width")?;
    let support = l.get(c.support, "support")?;
    if let Some(spec) = l.get(c.model_spec.clone(), "model-spec")? {
        if kind.is_some() || power.is_some() || rate.is_some() || width.is_some() || support.is_some() {
            return Err(usage("--model-spec cannot be combined with --model/--power/--rate-param/--width/--support"));
        }
        return model_from_json(&spec);
    }
    let kind = kind.unwrap_or_else(|| "ou".to_string());
    let (flag, key, value) = match kind.as_str() {
        "ou" => ("--rate-param", "rate", rate),
        "gaussian" => ("--width", "width", width),
        "triangular" => ("--support", "support", support),
        other => return Err(usage(format!("--model: unknown model `{other}` (expected ou, gaussian or triangular)"))),
    };
    for (given, name) in [(rate, "--rate-param"), (width, "--width"), (support, "--support")] {
        if given.is_some() && name != flag {
            return Err(usage(format!("{name} does not apply to --model {kind}")));
        }
    }
    let params = BTreeMap::from([("power".to_string(), power.unwrap_or(1.0)), (key.to_string(), value.unwrap_or(1.0))]);
    SpectralModel::from_params(&kind, &params).map_err(|e| usage(format!("{flag}/--power: {e}")))
}

fn resolve_schedule(args: &ScheduleArgs, l: &Layers) -> Result<ConvergenceSchedule, UsageError> {
    match l.get(args.schedule.clone(), "schedule")? {
        None => Ok(ConvergenceSchedule::default()),
        Some(s) => s.parse().map_err(|e| usage(format!("--schedule: {e}"))),
    }
}

fn resolve_point(args: &PointArgs, l: &Layers, default: SchedulePoint) -> Result<SchedulePoint, UsageError> {
    let horizon = l.get(args.horizon, "horizon")?.unwrap_or(default.horizon);
    let samples = l.get(args.samples, "samples")?.unwrap_or(default.samples);
    SamplingGrid::new(horizon, samples).map_err(|e| usage(format!("--horizon/--samples: {e}")))?;
    Ok(SchedulePoint { horizon, samples })
}

pub fn resolve(cli: Cli) -> Result<RunConfig, UsageError> {
    let file = match &cli.common.config {
        None => BTreeMap::new(),
        Some(path) => parse_config_file(&read_config(path)?)?,
    };
    let l = Layers { file };
    let c = &cli.common;
    let model = resolve_model(c, &l)?;
    let tol = l.get(c.tol, "tol")?.unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol < 1.0) {
        return Err(usage(format!("--tol must be in (0, 1), got {tol}")));
    }
    let seed = l.get(c.seed, "seed")?.unwrap_or(DEFAULT_SEED);
    let out = l.get(c.out.clone(), "out")?;
    let format = match l.get(c.format.clone(), "format")? {
        None => Format::default(),
        Some(f) => f.parse().map_err(|e| usage(format!("--format: {e}")))?,
    };
    let task = match &cli.command {
        Command::Rate(a) => Task::Rate { schedule: resolve_schedule(a, &l)? },
        Command::Equivalence(a) => Task::Equivalence { schedule: resolve_schedule(a, &l)? },
        Command::PowerSum(a) => {
            let point = resolve_point(&a.point, &l, DEFAULT_POINT)?;
            let powers = match l.get(a.q, "q")? {
                None => (1..=MAX_POWER).collect(),
                Some(q) if (1..=MAX_POWER).contains(&q) => vec![q],
                Some(q) => return Err(usage(format!("--q must be in 1..={MAX_POWER}, got {q}"))),
            };
            Task::PowerSum { point, powers }
        }
        Command::Sandwich(a) => {
            let degree = l.get(a.degree, "degree")?.unwrap_or(DEFAULT_DEGREE);
            if degree < 1 {
                return Err(usage("--degree must be >= 1"));
            }
            let domain_max = l.get(a.domain_max, "domain-max")?.unwrap_or(2.0 * model.abs_acf_integral());
            if !(domain_max > 0.0 && domain_max.is_finite()) {
                return Err(usage(format!("--domain-max must be > 0, got {domain_max}")));
            }
            Task::Sandwich { schedule: resolve_schedule(&a.schedule, &l)?, degree, domain_max }
        }
        Command::McValidate(a) => {
            let point = resolve_point(&a.point, &l, DEFAULT_MC_POINT)?;
            let refine = l.get(a.refine, "refine")?.unwrap_or(DEFAULT_REFINE);
            if refine < MIN_REFINE {
                return Err(usage(format!("--refine must be >= {MIN_REFINE}, got {refine}")));
            }
            let paths = l.get(a.paths, "paths")?.unwrap_or(DEFAULT_PATHS);
            if paths < MIN_PATHS_FOR_GRAM {
                return Err(usage(format!("--paths must be >= {MIN_PATHS_FOR_GRAM}, got {paths}")));
            }
            Task::McValidate { point, refine, paths, dump: l.get(a.dump.clone(), "dump")? }
        }
        Command::DumpGram(a) => Task::DumpGram { point: resolve_point(a, &l, DEFAULT_POINT)? },
        Command::DumpSpectrum(a) => {
            let source = match l.get(a.source.clone(), "source")?.as_deref() {
                None | Some("toeplitz") => SpectrumSource::Toeplitz,
                Some("circulant") => SpectrumSource::Circulant,
                Some(other) => return Err(usage(format!("--source must be toeplitz or circulant, got `{other}`"))),
            };
            Task::DumpSpectrum { point: resolve_point(&a.point, &l, DEFAULT_POINT)?, source }
        }
    };
    Ok(RunConfig { model, tol, seed, out, format, task })
}

fn read_config(path: &Path) -> Result<String, UsageError> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("--config {}: {e}", path.display())))
}
