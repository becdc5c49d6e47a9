//! Monte-Carlo ground truth for the Gram coefficients: stationary Gaussian
//! input paths on a refined grid, their per-cell integrals, and the channel
//! output with Brownian noise added.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gram::SamplingGrid;
use crate::linalg::{Cholesky, DenseMatrix};
use crate::models::SpectralModel;
use crate::par;

/// Generator identity recorded with every batch.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha 0.9), stream 2p signal / 2p+1 noise, rand_distr 0.5 StandardNormal";

pub const MIN_REFINE: usize = 4;
pub const MIN_PATHS_FOR_GRAM: usize = 100;

/// Diagonal jitter ladder (relative to `P`) tried when the refined
/// covariance is numerically indefinite.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub model: SpectralModel,
    pub grid: SamplingGrid,
    pub refine: usize,
    pub paths: usize,
    pub seed: u64,
    pub generator: &'static str,
    /// Diagonal jitter added to the refined covariance (0 for the OU fast path).
    pub jitter: f64,
    /// `paths × n`, row-major: `∫_{t_i}^{t_{i+1}} X ds` by the trapezoid rule.
    pub increments: Vec<f64>,
    /// `increments` plus Brownian increments of variance `h`.
    pub noisy: Option<Vec<f64>>,
}

impl PathBatch {
    pub fn path(&self, p: usize) -> &[f64] {
        let n = self.grid.samples();
        &self.increments[p * n..(p + 1) * n]
    }

    pub fn noisy_path(&self, p: usize) -> Option<&[f64]> {
        let n = self.grid.samples();
        self.noisy.as_ref().map(|v| &v[p * n..(p + 1) * n])
    }
}

enum PathSampler {
    Zero,
    /// Exact AR(1): `X_{k+1} = ρ X_k + σ_ε ε`.
    Autoregressive {
        sd: f64,
        rho: f64,
        innovation: f64,
    },
    Dense(Cholesky),
}

impl PathSampler {
    fn new(model: &SpectralModel, points: usize, delta: f64) -> Result<(Self, f64)> {
        let p = model.power();
        if p == 0.0 {
            return Ok((PathSampler::Zero, 0.0));
        }
        if let SpectralModel::OrnsteinUhlenbeck { power, rate } = *model {
            let rho = (-rate * delta).exp();
            let innovation = (power * -(-2.0 * rate * delta).exp_m1()).sqrt();
            return Ok((PathSampler::Autoregressive { sd: power.sqrt(), rho, innovation }, 0.0));
        }
        let acf: Vec<f64> = (0..points).map(|k| model.acf(k as f64 * delta)).collect();
        for &rel in &JITTER_LADDER {
            let jitter = rel * p;
            let cov = DenseMatrix::from_fn(points, |a, b| acf[a.abs_diff(b)] + if a == b { jitter } else { 0.0 });
            match Cholesky::factor(&cov) {
                Ok(c) => return Ok((PathSampler::Dense(c), jitter)),
                Err(Error::NotPositiveDefinite { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::FactorizationFailure { jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * p })
    }

    fn sample(&self, points: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut z = || -> f64 { StandardNormal.sample(rng) };
        match self {
            PathSampler::Zero => vec![0.0; points],
            PathSampler::Autoregressive { sd, rho, innovation } => {
                let mut x = Vec::with_capacity(points);
                let mut cur = sd * z();
                x.push(cur);
                for _ in 1..points {
                    cur = rho * cur + innovation * z();
                    x.push(cur);
                }
                x
            }
            PathSampler::Dense(c) => {
                let zs: Vec<f64> = (0..points).map(|_| z()).collect();
                c.lower_mul(&zs)
            }
        }
    }
}

fn signal_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path as u64);
    rng
}

fn noise_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * path as u64 + 1);
    rng
}

fn check_inputs(model: &SpectralModel, refine: usize) -> Result<()> {
    model.validate()?;
    if refine < MIN_REFINE {
        return Err(Error::InvalidArgument(format!("refine must be >= {MIN_REFINE}, got {refine}")));
    }
    Ok(())
}

/// `X` at the `n r + 1` refined grid points for one path index.
pub fn sample_refined_path(
    model: &SpectralModel,
    grid: &SamplingGrid,
    refine: usize,
    seed: u64,
    path: usize,
) -> Result<Vec<f64>> {
    check_inputs(model, refine)?;
    let points = grid.samples() * refine + 1;
    let (sampler, _) = PathSampler::new(model, points, grid.step() / refine as f64)?;
    Ok(sampler.sample(points, &mut signal_rng(seed, path)))
}

fn trapezoid_cells(x: &[f64], refine: usize, delta: f64, out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let cell = &x[i * refine..=(i + 1) * refine];
        let inner: f64 = cell[1..refine].iter().sum();
        *o = delta * (0.5 * (cell[0] + cell[refine]) + inner);
    }
}

/// Samples `paths` independent input paths and the channel output. Each path
/// draws from its own stream derived from `(seed, path index)`, so the batch
/// does not depend on how paths are scheduled across threads.
pub fn sample_paths(
    model: &SpectralModel,
    grid: &SamplingGrid,
    refine: usize,
    paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    check_inputs(model, refine)?;
    if paths == 0 {
        return Err(Error::InvalidArgument("need at least one path".into()));
    }
    let n = grid.samples();
    let h = grid.step();
    let delta = h / refine as f64;
    let points = n * refine + 1;
    let (sampler, jitter) = PathSampler::new(model, points, delta)?;
    let noise_sd = h.sqrt();

    let mut increments = vec![0.0; paths * n];
    let mut noisy = vec![0.0; paths * n];
    par::map_chunks_mut(&mut increments, n, |p, row| {
        let x = sampler.sample(points, &mut signal_rng(seed, p));
        trapezoid_cells(&x, refine, delta, row);
    });
    par::map_chunks_mut(&mut noisy, n, |p, row| {
        let mut rng = noise_rng(seed, p);
        let clean = &increments[p * n..(p + 1) * n];
        for (o, &c) in row.iter_mut().zip(clean) {
            let db: f64 = StandardNormal.sample(&mut rng);
            *o = c + noise_sd * db;
        }
    });
    Ok(PathBatch {
        model: *model,
        grid: *grid,
        refine,
        paths,
        seed,
        generator: GENERATOR,
        jitter,
        increments,
        noisy: Some(noisy),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalGram {
    pub gamma: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// `γ̃_l = (n/T) · mean_p [ mean_i x_{p,i} x_{p,i+l} ]` with standard errors
/// from the spread of the per-path averages.
pub fn empirical_gram(batch: &PathBatch) -> Result<EmpiricalGram> {
    if batch.paths < MIN_PATHS_FOR_GRAM {
        return Err(Error::InvalidArgument(format!(
            "empirical Gram needs at least {MIN_PATHS_FOR_GRAM} paths, got {}",
            batch.paths
        )));
    }
    let n = batch.grid.samples();
    let scale = 1.0 / batch.grid.step();
    let npaths = batch.paths as f64;
    let per_lag = par::map_indexed(n, |l| {
        let means: Vec<f64> = (0..batch.paths)
            .map(|p| {
                let x = batch.path(p);
                x[..n - l].iter().zip(&x[l..]).map(|(a, b)| a * b).sum::<f64>() / (n - l) as f64
            })
            .collect();
        let mean = means.iter().sum::<f64>() / npaths;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (npaths - 1.0);
        (scale * mean, scale * (var / npaths).sqrt())
    });
    let (gamma, std_err) = per_lag.into_iter().unzip();
    Ok(EmpiricalGram { gamma, std_err })
}

/// Exact expectation of the trapezoid estimator of `γ_l` with `r` sub-steps:
/// `(1/h) Σ_{a,b} w_a w_b R((l r + b - a) δ)`.
pub fn trapezoid_gram_expectation(
    model: &SpectralModel,
    grid: &SamplingGrid,
    refine: usize,
    lag: usize,
) -> Result<f64> {
    check_inputs(model, refine)?;
    let delta = grid.step() / refine as f64;
    let w = |a: usize| if a == 0 || a == refine { 0.5 * delta } else { delta };
    let base = (lag * refine) as f64;
    let mut s = 0.0;
    for a in 0..=refine {
        for b in 0..=refine {
            s += w(a) * w(b) * model.acf((base + b as f64 - a as f64) * delta);
        }
    }
    Ok(s / grid.step())
}

/// `mean((noisy - clean)²) / h`; close to 1 when the noise has per-cell variance `h`.
pub fn noise_variance_ratio(batch: &PathBatch) -> Option<f64> {
    let noisy = batch.noisy.as_ref()?;
    let m = noisy.len() as f64;
    let ss = par::sum_indexed(noisy.len(), |i| (noisy[i] - batch.increments[i]).powi(2));
    Some(ss / m / batch.grid.step())
}

pub const DUMP_MAGIC: &[u8; 4] = b"SZGL";
pub const DUMP_VERSION: u16 = 1;
const FLAG_NOISY: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumpHeader {
    pub version: u16,
    pub paths: u64,
    pub samples: u32,
    pub refine: u32,
    pub seed: u64,
    pub noisy: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchDump {
    pub header: DumpHeader,
    pub increments: Vec<f64>,
    pub noisy: Option<Vec<f64>>,
}

/// 32-byte little-endian header (`SZGL`, version, flags, N, n, r, seed)
/// followed by the increment table and, if flagged, the noisy table.
pub fn write_batch<W: Write>(batch: &PathBatch, out: &mut W) -> Result<()> {
    let samples = u32::try_from(batch.grid.samples())
        .map_err(|_| Error::InvalidArgument("n does not fit the dump header".into()))?;
    let refine =
        u32::try_from(batch.refine).map_err(|_| Error::InvalidArgument("r does not fit the dump header".into()))?;
    let mut header = Vec::with_capacity(32);
    header.extend_from_slice(DUMP_MAGIC);
    header.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    header.extend_from_slice(&(if batch.noisy.is_some() { FLAG_NOISY } else { 0 }).to_le_bytes());
    header.extend_from_slice(&(batch.paths as u64).to_le_bytes());
    header.extend_from_slice(&samples.to_le_bytes());
    header.extend_from_slice(&refine.to_le_bytes());
    header.extend_from_slice(&batch.seed.to_le_bytes());
    out.write_all(&header)?;
    let mut buf = Vec::with_capacity(8 * batch.increments.len());
    for table in std::iter::once(&batch.increments).chain(batch.noisy.as_ref()) {
        buf.clear();
        for v in table {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_batch<R: Read>(input: &mut R) -> Result<BatchDump> {
    let mut h = [0u8; 32];
    input.read_exact(&mut h)?;
    if &h[0..4] != DUMP_MAGIC {
        return Err(Error::InvalidArgument("not a batch dump (bad magic)".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes([h[i], h[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes(h[i..i + 4].try_into().expect("4 bytes"));
    let u64_at = |i: usize| u64::from_le_bytes(h[i..i + 8].try_into().expect("8 bytes"));
    let header = DumpHeader {
        version: u16_at(4),
        noisy: u16_at(6) & FLAG_NOISY != 0,
        paths: u64_at(8),
        samples: u32_at(16),
        refine: u32_at(20),
        seed: u64_at(24),
    };
    if header.version != DUMP_VERSION {
        return Err(Error::InvalidArgument(format!("unsupported dump version {}", header.version)));
    }
    let len = usize::try_from(header.paths)
        .ok()
        .and_then(|p| p.checked_mul(header.samples as usize))
        .ok_or_else(|| Error::InvalidArgument("dump dimensions overflow".into()))?;
    let mut table = || -> Result<Vec<f64>> {
        let mut bytes = vec![0u8; 8 * len];
        input.read_exact(&mut bytes)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    };
    let increments = table()?;
    let noisy = if header.noisy { Some(table()?) } else { None };
    Ok(BatchDump { header, increments, noisy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::gamma_sequence;

    fn ou11() -> SpectralModel {
        SpectralModel::ornstein_uhlenbeck(1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_power_gives_zero_increments() {
        let m = SpectralModel::gaussian_kernel(0.0, 1.0).unwrap();
        let grid = SamplingGrid::new(2.0, 10).unwrap();
        let b = sample_paths(&m, &grid, 4, 120, 7).unwrap();
        assert!(b.increments.iter().all(|&x| x == 0.0));
        let g = empirical_gram(&b).unwrap();
        assert!(g.gamma.iter().chain(&g.std_err).all(|&x| x == 0.0));
    }

    #[test]
    fn same_seed_same_batch() {
        let grid = SamplingGrid::new(5.0, 20).unwrap();
        let a = sample_paths(&ou11(), &grid, 4, 30, 99).unwrap();
        let b = sample_paths(&ou11(), &grid, 4, 30, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_paths(&ou11(), &grid, 4, 30, 100).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn paths_are_independent_of_batch_size() {
        let grid = SamplingGrid::new(5.0, 20).unwrap();
        let a = sample_paths(&ou11(), &grid, 4, 10, 3).unwrap();
        let b = sample_paths(&ou11(), &grid, 4, 25, 3).unwrap();
        assert_eq!(a.increments[..], b.increments[..a.increments.len()]);
    }

    fn lag_one_regression(x: &[f64]) -> f64 {
        let num: f64 = x.windows(2).map(|w| w[0] * w[1]).sum();
        let den: f64 = x[..x.len() - 1].iter().map(|v| v * v).sum();
        num / den
    }

    #[test]
    fn ou_refined_regression_coefficient() {
        let grid = SamplingGrid::new(1000.0, 1000).unwrap();
        let x = sample_refined_path(&ou11(), &grid, 8, 5, 0).unwrap();
        let rho = (-1.0f64 / 8.0).exp();
        let se = ((1.0 - rho * rho) / x.len() as f64).sqrt();
        assert!((lag_one_regression(&x) - rho).abs() < 4.0 * se);
    }

    #[test]
    fn dense_sampler_matches_kernel_correlation() {
        let m = SpectralModel::triangular(1.0, 2.0).unwrap();
        let grid = SamplingGrid::new(4.0, 8).unwrap();
        let delta = grid.step() / 4.0;
        let rho = m.acf(delta);
        let (mut num, mut den) = (0.0, 0.0);
        for p in 0..1000 {
            let x = sample_refined_path(&m, &grid, 4, 11, p).unwrap();
            num += x.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
            den += x[..x.len() - 1].iter().map(|v| v * v).sum::<f64>();
        }
        let est = num / den;
        assert!((est - rho).abs() < 0.02, "{est} vs {rho}");
    }

    #[test]
    fn gaussian_kernel_factorizes_with_jitter_if_needed() {
        let m = SpectralModel::gaussian_kernel(1.0, 1.0).unwrap();
        let grid = SamplingGrid::new(5.0, 25).unwrap();
        let b = sample_paths(&m, &grid, 8, 4, 1).unwrap();
        assert!(b.jitter <= 1e-8);
        assert!(b.increments.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn input_validation() {
        let grid = SamplingGrid::new(1.0, 4).unwrap();
        assert!(sample_paths(&ou11(), &grid, 3, 10, 0).is_err());
        assert!(sample_paths(&ou11(), &grid, 4, 0, 0).is_err());
        let b = sample_paths(&ou11(), &grid, 4, 99, 0).unwrap();
        assert!(matches!(empirical_gram(&b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn trapezoid_expectation_is_second_order() {
        let m = ou11();
        let grid = SamplingGrid::new(10.0, 100).unwrap();
        let gs = gamma_sequence(&m, &grid).unwrap();
        for lag in [0, 1, 3] {
            let errs: Vec<f64> = [4, 8, 16]
                .iter()
                .map(|&r| (trapezoid_gram_expectation(&m, &grid, r, lag).unwrap() - gs.gamma()[lag]).abs())
                .collect();
            for w in errs.windows(2) {
                let ratio = w[0] / w[1];
                assert!((3.5..4.5).contains(&ratio), "lag {lag}: {errs:?}");
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let grid = SamplingGrid::new(2.0, 8).unwrap();
        let b = sample_paths(&ou11(), &grid, 4, 5, 17).unwrap();
        let mut buf = Vec::new();
        write_batch(&b, &mut buf).unwrap();
        assert_eq!(buf.len(), 32 + 2 * 8 * 5 * 8);
        assert_eq!(&buf[..4], b"SZGL");
        let d = read_batch(&mut buf.as_slice()).unwrap();
        assert_eq!(d.header, DumpHeader { version: 1, paths: 5, samples: 8, refine: 4, seed: 17, noisy: true });
        assert_eq!(d.increments, b.increments);
        assert_eq!(d.noisy, b.noisy);
        buf[0] = b'X';
        assert!(read_batch(&mut buf.as_slice()).is_err());
    }
}
