//! Step-wise verification for zero-shot chain-of-thought reasoning.
//!
//! The crate samples reasoning chains from a language model, decomposes
//! them into steps, asks the model itself to double-check each step, and
//! turns those judgments into per-step scores used for answer voting and
//! step-wise search (greedy and beam).

pub mod backend;
pub mod bench;
pub mod config;
pub mod consensus;
pub mod error;
pub mod parse;
pub mod prompt;
pub mod scalar;
pub mod score;
pub mod search;
pub mod verifier;

/// Scalar type used by the orchestration layers. The scoring math in
/// [`score`] stays generic over [`scalar::Scalar`].
pub type Score = f64;

pub use error::{Error, Result};
