//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used for features, targets and losses.
///
/// Implemented for `f32` and `f64`. Probability levels are always carried as
/// `f64` regardless of the scalar, since their rank arithmetic must not lose
/// precision.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Real scalar")
    }

    /// Converts a count into the scalar.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable in every Real scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real scalars convert to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Total ordering for scalars already known to be NaN-free.
pub(crate) fn cmp_real<T: Real>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
