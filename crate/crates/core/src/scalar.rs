//! Scalar abstraction shared by the weighting, conformal and IPSW code.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the engine can run on (`f32` or `f64`).
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal or configuration value.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 converts to every float scalar")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize converts to every float scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Absolute slack absorbing accumulated rounding when a computed value is
    /// compared against an exact boundary (an integer index or a threshold).
    fn rounding_slack(magnitude: Self) -> Self {
        Self::epsilon() * Self::of(64.0) * magnitude.abs().max(Self::one())
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Ceiling that snaps values within rounding noise of an integer onto it.
pub(crate) fn snapped_ceil<T: Scalar>(value: T) -> T {
    let nearest = value.round();
    if (value - nearest).abs() <= T::rounding_slack(value) {
        nearest
    } else {
        value.ceil()
    }
}

/// Tolerance check for a probability vector summing to one.
pub(crate) fn sums_to_one<T: Scalar>(probs: &[T]) -> bool {
    let total = probs.iter().fold(T::zero(), |acc, &p| acc + p);
    (total - T::one()).abs() <= T::of(1e-9).max(T::epsilon() * T::of(16.0))
}
