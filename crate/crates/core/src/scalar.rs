//! Scalar abstraction for the numeric core.
//!
//! The model, optimizer, bases and metrics are written once against
//! [`Scalar`] and instantiated for `f64` (the default used by the pipeline)
//! or `f32`. The data-engineering side of the crate works in `f64` only.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the numeric core is generic over.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from an `f64` literal or data value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Short type tag recorded in checkpoints.
    fn type_name() -> &'static str;
}

impl Scalar for f64 {
    fn type_name() -> &'static str {
        "f64"
    }
}

impl Scalar for f32 {
    fn type_name() -> &'static str {
        "f32"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean<T: Scalar>(xs: &[T]) -> T {
        xs.iter().copied().sum::<T>() / T::from_usize(xs.len()).unwrap()
    }

    #[test]
    fn generic_helpers_work_for_both_widths() {
        assert_eq!(mean(&[1.0f64, 2.0, 3.0]), 2.0);
        assert_eq!(mean(&[1.0f32, 2.0, 3.0]), 2.0);
        assert_eq!(f32::lit(0.5).as_f64(), 0.5);
        assert_eq!(<f32 as Scalar>::type_name(), "f32");
    }
}
