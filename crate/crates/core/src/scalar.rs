//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::str::FromStr;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the model is generic over (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + Sum
    + Debug
    + Display
    + LowerExp
    + FromStr
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Significant digits needed for an exact text round trip.
    const ROUND_TRIP_DIGITS: usize;
}

impl Scalar for f32 {
    const ROUND_TRIP_DIGITS: usize = 9;
}

impl Scalar for f64 {
    const ROUND_TRIP_DIGITS: usize = 17;
}

/// Formats `x` with enough significant digits to parse back bit-exactly.
pub fn format_full<T: Scalar>(x: T) -> String {
    format!("{:.*e}", T::ROUND_TRIP_DIGITS - 1, x)
}
