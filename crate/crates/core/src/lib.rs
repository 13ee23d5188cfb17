//! Differentially private data-efficient model training.
//!
//! The crate implements the full pipeline for comparing subset-selection
//! strategies under a shared privacy budget:
//!
//! * [`data`] — dataset representation, deterministic synthetic generation,
//!   class-imbalance induction, and an IDX digit-corpus loader;
//! * [`model`] — small differentiable classifiers (multinomial logistic and
//!   one-hidden-layer MLP) with exact per-sample gradients;
//! * [`privacy`] — the Gaussian and exponential mechanisms, an RDP accountant
//!   with noise calibration, and a budget ledger;
//! * [`selection`] — gain computation, stochastic greedy, and its private
//!   variant where the argmax is replaced by exponential-mechanism sampling;
//! * [`trainer`] — DP-SGD training orchestration for the glister-dp,
//!   random-dp, and full-dp strategies.

pub mod data;
pub mod error;
pub mod model;
pub mod privacy;
pub mod selection;
pub mod trainer;

#[cfg(feature = "testkit")]
pub mod testkit;

pub use error::{Error, Result};
