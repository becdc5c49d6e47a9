use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid sampling grid: {0}")]
    InvalidGrid(String),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not converge: {0}")]
    NonConvergedQuadrature(String),

    #[error("cell quadrature failed to reach {tolerance:e} absolute at lag {lag}")]
    QuadratureFailure { lag: usize, tolerance: f64 },

    #[error("circulant row is not wrap-symmetric at index {index} (|diff| = {diff:e})")]
    Asymmetry { index: usize, diff: f64 },

    #[error("eigensolver failed to converge for eigenvalue {index}")]
    ConvergenceFailure { index: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("eigenvalue {value} outside sandwich domain [{lower:e}, {upper}]")]
    DomainExceeded { value: f64, lower: f64, upper: f64 },

    #[error("degree {degree} too low: sandwich invariant fails at x = {x}")]
    DegreeTooLow { degree: usize, x: f64 },

    #[error("covariance factorization failed (jitter {jitter:e})")]
    FactorizationFailure { jitter: f64 },

    #[error("at schedule point T = {horizon}, n = {samples}: {source}")]
    AtPoint {
        horizon: f64,
        samples: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn at_point(self, horizon: f64, samples: usize) -> Self {
        Error::AtPoint { horizon, samples, source: Box::new(self) }
    }

    /// True for failures of the numerical machinery (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonConvergedQuadrature(_)
            | Error::QuadratureFailure { .. }
            | Error::Asymmetry { .. }
            | Error::ConvergenceFailure { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::DomainExceeded { .. }
            | Error::DegreeTooLow { .. }
            | Error::FactorizationFailure { .. } => true,
            Error::AtPoint { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
