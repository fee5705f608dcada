//! Scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

/// Floating-point scalar, implemented for `f32` and `f64`.
///
/// Everything the dense-algebra kernels need: IEEE float ops, conversions
/// from literals, and in-place arithmetic. `Float + 'static + Copy` also
/// satisfies `ndarray::LinalgScalar`, so matrix products come for free.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn from_f64_lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Real for f32 {}
impl Real for f64 {}
