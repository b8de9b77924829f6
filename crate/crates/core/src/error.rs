use thiserror::Error;

/// Errors raised by the watermark toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An internal invariant was broken; indicates a bug rather than bad input.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// The requested quantile is estimated from too few tail samples.
    #[error("unstable quantile: alpha * reps = {tail} < 10 (alpha = {alpha}, reps = {reps})")]
    UnstableQuantile { alpha: f64, reps: usize, tail: f64 },

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge: estimate {estimate}, error bound {error} > tolerance {tolerance}")]
    Quadrature {
        estimate: f64,
        error: f64,
        tolerance: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
