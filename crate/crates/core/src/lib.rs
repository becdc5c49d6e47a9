//! Sampled-channel capacity asymptotics for continuous-time Gaussian
//! channels with stationary inputs: Gram coefficients of the integrate-and-dump
//! sampler, Toeplitz and circulant spectra, and the Szegő-type rate limit
//! `(1/4π) ∫ log(1 + 2π f(λ)) dλ`.

pub mod error;
pub mod gram;
pub mod linalg;
pub mod mc;
pub mod models;
pub mod par;
pub mod quad;
pub mod report;
pub mod spectra;
pub mod szego;

pub use error::{Error, Result};
pub use gram::{gamma_sequence, GramSequence, SamplingGrid};
pub use models::{Functional, SpectralModel};
pub use report::{Format, Table};
pub use spectra::{SpectrumResult, SpectrumSource};
pub use szego::{rate_convergence, ConvergenceSchedule, RateReport, SchedulePoint};
