//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the solver, optimizer, and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    /// A vertical TBU is too close to the bar state: |F12| fell below the
    /// singularity tolerance, so the V-form column transfer is undefined.
    #[error(
        "vertical TBU at (row {row}, col {col}) is in a bar state: |F12| = {f12_magnitude:.3e}"
    )]
    SingularBarState {
        row: usize,
        col: usize,
        f12_magnitude: f64,
    },

    /// A linear solve failed (singular or non-finite factorization).
    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    DomainError(String),

    /// A frequency-grid request was empty or inverted.
    #[error("invalid frequency range: {0}")]
    InvalidRange(String),

    /// Negative heater power passed to the thermal model.
    #[error("negative power at index {index}: {value}")]
    NegativePower { index: usize, value: f64 },

    /// A relaxed-row coefficient q_m vanished (phi = theta + pi).
    #[error("degenerate relaxed row: q_{index} = 0 (phi = theta + pi)")]
    DegenerateRow { index: usize },

    /// Parameter outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Scenario or mesh-state content failed validation.
    #[error("validation error in field `{field}`: {message}")]
    Validation { field: String, message: String },

    /// Array shapes do not line up.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The optimizer made no progress for longer than its patience window.
    #[error(
        "optimizer made no progress after {iterations} iterations (best cost {best_cost:.6e})"
    )]
    NoProgress { iterations: usize, best_cost: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
