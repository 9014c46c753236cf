//! Scalar abstraction for the numeric core.

use crate::Rat;
use num_traits::FromPrimitive;

/// Floating-point scalar the solver is generic over: f32 or f64.
pub trait Scalar:
    num_traits::Float + FromPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Exact rational to scalar, numerator / denominator.
    fn from_rat(r: Rat) -> Self {
        let n = Self::from_i64(*r.numer()).expect("numerator representable");
        let d = Self::from_i64(*r.denom()).expect("denominator representable");
        n / d
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
