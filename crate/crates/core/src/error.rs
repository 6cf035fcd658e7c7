use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NhtError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature did not converge: {what} (estimate {estimate:e}, error {error:e})")]
    QuadratureNonConvergence {
        what: String,
        estimate: f64,
        error: f64,
    },

    #[error("kernel routes disagree at t={t}, r={r}: subordination {subordination:e} vs fourier {fourier:e}")]
    RouteDisagreement {
        t: f64,
        r: f64,
        subordination: f64,
        fourier: f64,
    },

    #[error("estimate out of validity range: {0}")]
    OutOfValidityRange(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate Monte Carlo estimate: {0}")]
    DegenerateEstimate(String),

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("remainder unresolvable: {0}")]
    RemainderUnresolvable(String),

    #[error("moment infinite: {0}")]
    MomentInfinite(String),

    #[error("input/output: {0}")]
    Io(String),

    #[error("internal numerical error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, NhtError>;

pub(crate) fn invalid(msg: impl Into<String>) -> NhtError {
    NhtError::InvalidParameter(msg.into())
}
