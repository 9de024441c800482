use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An input tensor had the wrong shape for the requested operation.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A numerical quantity became NaN or infinite.
    #[error("non-finite value in {context} (index {index})")]
    NonFinite { context: String, index: usize },

    /// Fixed-point inversion did not reach the requested tolerance.
    #[error("fixed-point inversion did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence { iters: usize, residual: f64 },

    /// A flow Jacobian was numerically singular, which a capped flow must
    /// never produce.
    #[error("degenerate Jacobian: |det| = {det:.3e} below 1e-300")]
    DegenerateJacobian { det: f64 },

    /// The ODE state blew up during integration.
    #[error("solver diverged at step {step}: non-finite state")]
    SolverDiverged { step: usize },

    /// The finite-difference oracle hit a non-finite function value.
    #[error("finite-difference oracle failure: non-finite function value at coordinate {coord}")]
    OracleFailure { coord: usize },

    /// A dataset file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A channel has no observed values at all, so no path can be built
    /// through it.
    #[error("channel {channel} has no observed values")]
    UnusableChannel { channel: usize },

    /// Generic invalid-input rejection.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Training produced a non-finite loss.
    #[error("training failure at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
