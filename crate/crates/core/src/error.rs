//! Crate-wide error type.

/// Errors shared by every module in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// Power-iteration style routines that stall carry their best estimate.
    #[error("no convergence after {iterations} iterations; best estimate {best:.6e}")]
    NoConvergence { iterations: usize, best: f64 },

    #[error("rank deficiency: {0}")]
    RankDeficient(String),

    /// Alignment problems become meaningless when the cross-covariance is singular.
    #[error("degenerate alignment: smallest singular value {0:.3e}")]
    DegenerateAlignment(f64),

    #[error("unsupported mode: {0}")]
    Unsupported(String),

    /// A quantity left the representable training regime (guard at 1e12).
    #[error("divergence at step {step}: {quantity} = {value:.3e}")]
    Divergence {
        step: usize,
        quantity: String,
        value: f64,
    },

    /// Subspace perturbation bounds need a strictly positive eigengap.
    #[error("eigengap not positive: lambda_z = {lambda_z:.6e}, lambda_z1 = {lambda_z1:.6e}")]
    EigengapNotPositive { lambda_z: f64, lambda_z1: f64 },

    /// Kernel-change bounds only hold for horizons t <= M^alpha.
    #[error("out of regime: t = {t} exceeds the horizon M^alpha = {horizon:.3}")]
    OutOfRegime { t: usize, horizon: f64 },

    #[error("data format: {0}")]
    DataFormat(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
