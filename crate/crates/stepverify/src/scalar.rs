//! Scalar abstraction for the scoring math.
//!
//! All score arithmetic (step scores, verification scores, beam
//! aggregation, softmax pruning, classification metrics) is generic over
//! [`Scalar`] so it can run in `f32` or `f64`. The rest of the crate uses
//! the [`crate::Score`] alias (`f64`).

use num_traits::{Float, FromPrimitive};

/// Floating point scalar usable for score computation: f32 or f64.
pub trait Scalar: Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + 'static {
    fn half() -> Self {
        Self::from_f64(0.5).unwrap()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
