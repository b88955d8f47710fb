use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Variants split into configuration problems (bad input, bad files) and
/// numerical failures; [`Error::is_numerical`] tells them apart so the CLI
/// can map them onto distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a series kernel")]
    NotSeries,

    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NonSymmetric { max_asymmetry: f64 },

    #[error("Krylov space degenerate: only {achieved} independent directions")]
    KrylovBreakdown { achieved: usize },

    #[error("conjugate gradient breakdown at step {step}: curvature {curvature:e} is not positive")]
    CgBreakdown { step: usize, curvature: f64 },

    #[error("action {index} lies in the span of the previous actions (eta = {eta:e})")]
    DependentPolicy { index: usize, eta: f64 },

    #[error("policy exhausted after {available} actions, {requested} requested")]
    PolicyExhausted { requested: usize, available: usize },

    #[error("inducing covariance is singular: eigenvalue {index} is {value:e}")]
    SingularInducing { index: usize, value: f64 },

    #[error("Cholesky factorization failed at pivot {pivot}")]
    Factorization { pivot: usize },

    #[error("eigendecomposition did not converge")]
    EigenConvergence,

    #[error("negative predictive variance {variance:e} at probe {index} (prior variance {prior:e})")]
    NegativeVariance { index: usize, variance: f64, prior: f64 },

    #[error("problem size {n} exceeds the dense limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// `true` for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::KrylovBreakdown { .. }
                | Error::CgBreakdown { .. }
                | Error::DependentPolicy { .. }
                | Error::SingularInducing { .. }
                | Error::Factorization { .. }
                | Error::EigenConvergence
                | Error::NegativeVariance { .. }
        )
    }
}
