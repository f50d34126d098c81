//! Floating-point scalar abstraction shared by every numeric routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for masses, rates and times.
///
/// Implemented for `f32` and `f64`. The tolerance constants scale the slack
/// used by the inequality checks so that single precision runs do not report
/// rounding noise as violations.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Relative slack for `lhs <= rhs` style checks.
    const REL_TOL: f64;
    /// Absolute slack for `lhs <= rhs` style checks.
    const ABS_TOL: f64;

    /// Converts an `f64` literal. Panics only for values that cannot be
    /// represented at all (never for finite literals).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }
}

impl Scalar for f64 {
    const REL_TOL: f64 = 1e-9;
    const ABS_TOL: f64 = 1e-12;
}

impl Scalar for f32 {
    const REL_TOL: f64 = 1e-4;
    const ABS_TOL: f64 = 1e-5;
}

/// `lhs <= rhs` with the scalar's slack.
#[inline]
pub fn le_with_slack<T: Scalar>(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + rhs.abs() * T::REL_TOL + T::ABS_TOL
}
