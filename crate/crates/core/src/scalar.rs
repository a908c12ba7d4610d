//! Floating-point abstraction shared by the scoring and metric code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// A real scalar the engine can compute scores in.
///
/// Implemented for `f32` and `f64`. File formats and reports always go
/// through `f64`, so a corpus scored in `f32` round-trips through the same
/// wire format.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts from `f64`, rounding to the nearest representable value.
    fn of(value: f64) -> Self;

    /// Widens (or passes through) to `f64`.
    fn widen(self) -> f64;

    fn of_usize(value: usize) -> Self {
        Self::of(value as f64)
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(value: f64) -> Self {
        value
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }
}

/// Arithmetic mean computed around the first element as pivot.
///
/// A constant sequence yields exactly that constant, and summation order is
/// the iteration order. Returns `None` for an empty iterator.
pub fn pivot_mean<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let mut iter = values.into_iter();
    let pivot = iter.next()?;
    let mut deviation = T::zero();
    let mut count = 1usize;
    for value in iter {
        deviation = deviation + (value - pivot);
        count += 1;
    }
    Some(pivot + deviation / T::of_usize(count))
}
