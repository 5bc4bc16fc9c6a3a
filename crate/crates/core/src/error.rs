use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid with {n} steps exceeds the Cholesky sampler limit of {limit}")]
    CholeskyTooLarge { n: usize, limit: usize },

    #[error("fGn covariance matrix of size {n} is not numerically positive definite")]
    NotPositiveDefinite { n: usize },

    #[error("circulant embedding eigenvalue {value:e} at index {index} is below -{tolerance:e} (relative)")]
    NegativeEigenvalue { index: usize, value: f64, tolerance: f64 },

    #[error("coarsening factor {factor} does not divide the step count {n}")]
    IndivisibleCoarsening { n: usize, factor: usize },

    #[error("unknown SDE `{name}`; known names: {known}")]
    UnknownSde { name: String, known: String },

    #[error("driver index {index} out of range for m = {m}")]
    IndexOutOfRange { index: usize, m: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error(
        "Crank-Nicolson map not contractive at step {step}: \
         L/2 * |dB|_1 = {ratio:.4} >= 1 with |dB|_1 = {increment_norm:.6}"
    )]
    NonContractive {
        step: usize,
        increment_norm: f64,
        ratio: f64,
    },

    #[error(
        "Crank-Nicolson fixed point did not converge at step {step}: \
         residual {residual:e} after {iterations} iterations"
    )]
    NoConvergence {
        step: usize,
        residual: f64,
        iterations: usize,
    },

    #[error("time {t} is not a point of the fine grid")]
    OffGrid { t: f64 },

    #[error(
        "quadrature for p = {p} not converged: doubling the order changed the value by {relative_change:e} (relative)"
    )]
    QuadratureNotConverged { p: i64, relative_change: f64 },

    #[error("{rejected} of {paths} paths rejected as non-contractive (limit 1%)")]
    TooManyRejections { rejected: usize, paths: usize },

    #[error("degenerate regression: {0}")]
    DegenerateFit(String),

    #[error("case mismatch: {0}")]
    CaseMismatch(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
