//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (bad ratios, infeasible budget split, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed on-disk data; `offset` is the byte position of the problem.
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Operation called outside its domain (empty input, out-of-range index).
    #[error("domain error: {0}")]
    Domain(String),

    /// A spend was rejected because it would exceed the privacy budget.
    #[error(
        "privacy budget exceeded: requested (eps={requested_eps}, delta={requested_delta}), \
         remaining (eps={remaining_eps}, delta={remaining_delta})"
    )]
    BudgetExceeded {
        requested_eps: f64,
        requested_delta: f64,
        remaining_eps: f64,
        remaining_delta: f64,
    },

    /// Noise calibration could not reach the target within the sigma bracket.
    #[error("calibration error: target eps {target} unreachable within sigma in [{lo}, {hi}]: {message}")]
    Calibration {
        target: f64,
        lo: f64,
        hi: f64,
        message: String,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
