//! Floating-point scalar abstraction shared by every numerical routine.

use std::iter::Sum;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Real scalar the library is generic over (`f32` or `f64`).
pub trait Scalar: NdFloat + FromPrimitive + Sum + for<'a> Sum<&'a Self> {
    /// Converts an `f64` literal, panicking only for values the type cannot represent at all.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal representable as scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: NdFloat + FromPrimitive + Sum + for<'a> Sum<&'a T> {}
