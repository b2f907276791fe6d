use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (pivot {pivot} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("quadratic form is negative ({0}); covariance is indefinite")]
    Indefinite(f64),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate denominator: true optimal risk is {0}")]
    DegenerateDenominator(f64),

    #[error("divergence: r = {r} is at or beyond the critical ratio {r_c}")]
    Divergence { r: f64, r_c: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no feasible trials out of {trials}")]
    EmptyStatistics { trials: usize },

    #[error("probit fit is unidentifiable: {0}")]
    UnidentifiableFit(String),

    #[error("failed to converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    Convergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("fitted curves do not intersect (sigma {sigma_a} vs {sigma_b})")]
    NoIntersection { sigma_a: f64, sigma_b: f64 },

    #[error("parse error in {file} line {line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
