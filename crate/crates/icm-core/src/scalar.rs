//! Scalar abstraction for the numeric core.
//!
//! Math code is generic over [`Scalar`] so the same routines run in `f32`
//! (model forward/backward, on-disk activations) and `f64` (probe fitting,
//! metrics, gradient checks). Concrete aliases live at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable throughout the numeric core.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for lossy conversion of literals into the working scalar.
#[inline]
pub fn fl<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("finite literal converts to any Scalar")
}
