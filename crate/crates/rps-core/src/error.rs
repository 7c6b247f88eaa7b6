use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type. Variants are grouped by the surface they guard:
/// configuration/validation, grid alignment, numerics, and statistics.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid construction parameters (bad sign class, empty tables, ...).
    #[error("config: {0}")]
    Config(String),

    /// Argument outside an operation's domain (negative radius, t < s, ...).
    #[error("domain: {0}")]
    Domain(String),

    /// A time or shift is not on the step grid, or a noise window is too short.
    #[error("alignment: {0}")]
    Alignment(String),

    /// Quadrature or table construction failed to converge.
    #[error("numeric: {0}")]
    Numeric(String),

    /// A simulated state left the admissible range.
    #[error("divergence at step {step} (t = {time}): |state| = {magnitude}")]
    Divergence { step: usize, time: f64, magnitude: f64 },

    /// The requested model class does not support the operation.
    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    /// Mismatched sample sizes or otherwise unusable statistical input.
    #[error("argument: {0}")]
    Argument(String),

    /// A rate/contraction fit has no usable data (all runs coupled, zero gaps).
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
}
