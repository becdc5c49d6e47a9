//! Stationary Gaussian input models given as exact autocorrelation / power
//! spectral density pairs, with `f(λ) = (1/2π) ∫ R(τ) e^{-iτλ} dτ`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};
use crate::quad::integrate_adaptive;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralModel {
    /// `R(τ) = P e^{-α|τ|}`, `f(λ) = Pα / (π(α² + λ²))`.
    OrnsteinUhlenbeck { power: f64, rate: f64 },
    /// `R(τ) = P e^{-τ²/(2σ²)}`, `f(λ) = (Pσ/√(2π)) e^{-σ²λ²/2}`.
    GaussianKernel { power: f64, width: f64 },
    /// `R(τ) = P max(0, 1 - |τ|/τ₀)`, `f(λ) = (Pτ₀/2π) sinc²(λτ₀/2)`.
    Triangular { power: f64, support: f64 },
}

/// The integrand family `g` in `(1/2π) ∫ g(2πf(λ)) dλ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    Monomial(u32),
    Log1p,
}

impl SpectralModel {
    pub fn ornstein_uhlenbeck(power: f64, rate: f64) -> Result<Self> {
        let m = SpectralModel::OrnsteinUhlenbeck { power, rate };
        m.validate()?;
        Ok(m)
    }

    pub fn gaussian_kernel(power: f64, width: f64) -> Result<Self> {
        let m = SpectralModel::GaussianKernel { power, width };
        m.validate()?;
        Ok(m)
    }

    pub fn triangular(power: f64, support: f64) -> Result<Self> {
        let m = SpectralModel::Triangular { power, support };
        m.validate()?;
        Ok(m)
    }

    /// Builds a model from a kind name (`ou`, `gaussian`, `triangular`) and
    /// its named parameters. Unknown or missing parameters are rejected.
    pub fn from_params(kind: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        type Builder = fn(f64, f64) -> Result<SpectralModel>;
        let (second, build): (&str, Builder) = match kind {
            "ou" | "ornstein-uhlenbeck" => ("rate", Self::ornstein_uhlenbeck),
            "gaussian" | "gaussian-kernel" => ("width", Self::gaussian_kernel),
            "triangular" => ("support", Self::triangular),
            other => return Err(Error::InvalidModel(format!("unknown model kind `{other}`"))),
        };
        if let Some(extra) = params.keys().find(|k| *k != "power" && *k != second) {
            return Err(Error::InvalidModel(format!("parameter `{extra}` does not apply to `{kind}`")));
        }
        let get = |name: &str| {
            params
                .get(name)
                .copied()
                .ok_or_else(|| Error::InvalidModel(format!("missing parameter `{name}` for `{kind}`")))
        };
        build(get("power")?, get(second)?)
    }

    pub fn validate(&self) -> Result<()> {
        let (power, (name, scale)) = match *self {
            SpectralModel::OrnsteinUhlenbeck { power, rate } => (power, ("rate", rate)),
            SpectralModel::GaussianKernel { power, width } => (power, ("width", width)),
            SpectralModel::Triangular { power, support } => (power, ("support", support)),
        };
        if !(power.is_finite() && power >= 0.0) {
            return Err(Error::InvalidModel(format!("power must be finite and >= 0, got {power}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidModel(format!("{name} must be finite and > 0, got {scale}")));
        }
        Ok(())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SpectralModel::OrnsteinUhlenbeck { .. } => "ou",
            SpectralModel::GaussianKernel { .. } => "gaussian",
            SpectralModel::Triangular { .. } => "triangular",
        }
    }

    pub fn power(&self) -> f64 {
        match *self {
            SpectralModel::OrnsteinUhlenbeck { power, .. }
            | SpectralModel::GaussianKernel { power, .. }
            | SpectralModel::Triangular { power, .. } => power,
        }
    }

    /// Autocorrelation `R(τ)`.
    pub fn acf(&self, tau: f64) -> f64 {
        let t = tau.abs();
        match *self {
            SpectralModel::OrnsteinUhlenbeck { power, rate } => power * (-rate * t).exp(),
            SpectralModel::GaussianKernel { power, width } => power * (-0.5 * (t / width).powi(2)).exp(),
            SpectralModel::Triangular { power, support } => power * (1.0 - t / support).max(0.0),
        }
    }

    /// Power spectral density `f(λ)`, λ in radians per unit time.
    pub fn psd(&self, lambda: f64) -> f64 {
        let l = lambda.abs();
        match *self {
            SpectralModel::OrnsteinUhlenbeck { power, rate } => power * rate / (PI * (rate * rate + l * l)),
            SpectralModel::GaussianKernel { power, width } => {
                power * width / (2.0 * PI).sqrt() * (-0.5 * (width * l).powi(2)).exp()
            }
            SpectralModel::Triangular { power, support } => {
                power * support / (2.0 * PI) * sinc(0.5 * l * support).powi(2)
            }
        }
    }

    /// `∫ |R(τ)| dτ` over the real line, in closed form.
    pub fn abs_acf_integral(&self) -> f64 {
        match *self {
            SpectralModel::OrnsteinUhlenbeck { power, rate } => 2.0 * power / rate,
            SpectralModel::GaussianKernel { power, width } => power * width * (2.0 * PI).sqrt(),
            SpectralModel::Triangular { power, support } => power * support,
        }
    }

    /// `sup |R| = R(0)`.
    pub fn acf_sup(&self) -> f64 {
        self.power()
    }

    /// Natural time scale of `R`: `1/α`, `σ` or `τ₀`.
    pub fn correlation_time(&self) -> f64 {
        match *self {
            SpectralModel::OrnsteinUhlenbeck { rate, .. } => 1.0 / rate,
            SpectralModel::GaussianKernel { width, .. } => width,
            SpectralModel::Triangular { support, .. } => support,
        }
    }

    /// Points where `R` fails to be smooth.
    pub(crate) fn acf_kinks(&self) -> Vec<f64> {
        match *self {
            SpectralModel::OrnsteinUhlenbeck { .. } => vec![0.0],
            SpectralModel::GaussianKernel { .. } => vec![],
            SpectralModel::Triangular { support, .. } => vec![-support, 0.0, support],
        }
    }

    /// `(1/2π) ∫ g(2πf(λ)) dλ` over the real line to relative accuracy `tol`.
    ///
    /// The half-line `[0, Λ]` is covered by model-specific panels (geometric
    /// for the smooth spectra, one panel per sinc² lobe for the triangle).
    /// Beyond `Λ` the first-order part of `g` is added in closed form and the
    /// rest is bounded by an analytic envelope; `Λ` grows until that bound is
    /// below `tol/2` of the running value.
    pub fn spectral_functional(&self, g: Functional, tol: f64) -> Result<f64> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tolerance must be > 0, got {tol}")));
        }
        if let Functional::Monomial(0) = g {
            return Err(Error::InvalidArgument("monomial degree must be >= 1".into()));
        }
        self.validate()?;
        if self.power() == 0.0 {
            return Ok(0.0);
        }
        let integrand = |l: f64| {
            let x = 2.0 * PI * self.psd(l);
            match g {
                Functional::Log1p => x.ln_1p(),
                Functional::Monomial(q) => x.powi(q as i32),
            }
        };
        const MIN_PANELS: usize = 8;
        const MAX_PANELS: usize = 1 << 16;
        let mut core = 0.0;
        for k in 0..MAX_PANELS {
            let (a, b) = self.panel(k);
            let est = integrate_adaptive(&integrand, a, b, 1e-300, 0.25 * tol, 4000)?;
            core += est.value;
            if k + 1 < MIN_PANELS {
                continue;
            }
            let value = (core + self.linear_tail(g, b)) / PI;
            if self.tail_error_bound(g, b) / PI <= 0.5 * tol * value.abs() {
                return Ok(value);
            }
        }
        Err(Error::NonConvergedQuadrature(format!("{g:?} on {self}: tail bound not met within {MAX_PANELS} panels")))
    }

    fn panel(&self, k: usize) -> (f64, f64) {
        let geometric = |s: f64| {
            if k == 0 {
                (0.0, s)
            } else {
                (s * 2f64.powi(k as i32 - 1), s * 2f64.powi(k as i32))
            }
        };
        match *self {
            SpectralModel::OrnsteinUhlenbeck { rate, .. } => geometric(rate),
            SpectralModel::GaussianKernel { width, .. } => geometric(1.0 / width),
            SpectralModel::Triangular { support, .. } => {
                let lobe = 2.0 * PI / support;
                (k as f64 * lobe, (k + 1) as f64 * lobe)
            }
        }
    }

    /// Closed-form `∫_Λ^∞ g₁(2πf)` where `g₁` is the linear part of `g`.
    fn linear_tail(&self, g: Functional, cutoff: f64) -> f64 {
        match g {
            Functional::Log1p | Functional::Monomial(1) => self.psd_tail_linear(cutoff),
            Functional::Monomial(_) => 0.0,
        }
    }

    /// `∫_Λ^∞ 2πf(λ) dλ`, central value.
    fn psd_tail_linear(&self, cutoff: f64) -> f64 {
        match *self {
            SpectralModel::OrnsteinUhlenbeck { power, rate } => 2.0 * power * (rate / cutoff).atan(),
            SpectralModel::GaussianKernel { power, width } => power * PI * libm::erfc(width * cutoff / 2f64.sqrt()),
            SpectralModel::Triangular { power, support } => {
                // ∫_U^∞ sin²u/u² du = 1/(2U) + sin(2U)/(4U²) + r, |r| <= 1/(2U³)
                let u = 0.5 * cutoff * support;
                2.0 * power * (0.5 / u + (2.0 * u).sin() / (4.0 * u * u))
            }
        }
    }

    /// Upper bound on the error of `linear_tail` as a stand-in for `∫_Λ^∞ g(2πf)`.
    fn tail_error_bound(&self, g: Functional, cutoff: f64) -> f64 {
        let linear_remainder = match *self {
            SpectralModel::Triangular { power, support } => {
                let u = 0.5 * cutoff * support;
                power / u.powi(3)
            }
            _ => 0.0,
        };
        match g {
            Functional::Monomial(1) => linear_remainder,
            // 0 <= x - log1p(x) <= x²/2
            Functional::Log1p => linear_remainder + 0.5 * self.psd_power_tail_bound(2, cutoff),
            Functional::Monomial(q) => self.psd_power_tail_bound(q, cutoff),
        }
    }

    /// Upper bound on `∫_Λ^∞ (2πf(λ))^q dλ` from an analytic envelope of `f`.
    fn psd_power_tail_bound(&self, q: u32, cutoff: f64) -> f64 {
        let qf = q as f64;
        let algebraic = |amp: f64| amp.powi(q as i32) * cutoff.powf(1.0 - 2.0 * qf) / (2.0 * qf - 1.0);
        match *self {
            // 2πf <= 2Pα/λ²
            SpectralModel::OrnsteinUhlenbeck { power, rate } => algebraic(2.0 * power * rate),
            SpectralModel::GaussianKernel { power, width } => {
                (power * width * (2.0 * PI).sqrt()).powi(q as i32) * (PI / (2.0 * qf)).sqrt() / width
                    * libm::erfc(width * cutoff * (0.5 * qf).sqrt())
            }
            // 2πf <= 4P/(τ₀λ²)
            SpectralModel::Triangular { power, support } => algebraic(4.0 * power / support),
        }
    }
}

impl fmt::Display for SpectralModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SpectralModel::OrnsteinUhlenbeck { power, rate } => write!(f, "ou(power={power}, rate={rate})"),
            SpectralModel::GaussianKernel { power, width } => {
                write!(f, "gaussian(power={power}, width={width})")
            }
            SpectralModel::Triangular { power, support } => {
                write!(f, "triangular(power={power}, support={support})")
            }
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}
