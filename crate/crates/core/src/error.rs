//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by field evaluation, integration, and estimators.
#[derive(Debug, Error)]
pub enum GaussFlowError {
    /// A point, matrix, or ensemble has the wrong dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An operation was requested that the field family cannot provide
    /// (e.g. an analytic Jacobian at a singular point).
    #[error("capability error: {0}")]
    Capability(String),

    /// A parameter violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The state norm exceeded the blow-up guard during integration.
    /// Linear-growth coefficients cannot blow up; this signals a
    /// misconfigured field.
    #[error("trajectory blow-up at step {step} (|X| > {guard:e})")]
    BlowUp { step: usize, guard: f64 },

    /// The entropy-bound recursion depth exceeded the desk-scale limit.
    #[error("L^(2^N) norms with N = {n} exceed the desk-scale limit N <= {max}; the bound is vacuous")]
    DeskScaleLimit { n: u32, max: u32 },

    /// No admissible horizon was found; the exponential integrability
    /// assumption fails for this ensemble.
    #[error("condition violated: {0}")]
    ConditionViolated(String),
}

pub type Result<T> = std::result::Result<T, GaussFlowError>;

impl GaussFlowError {
    pub fn dim(expected: usize, got: usize) -> Self {
        GaussFlowError::DimensionMismatch { expected, got }
    }
}
