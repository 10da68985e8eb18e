//! Floating-point abstraction for the linear-algebra layer.

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, NumCast};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real scalar used by fields, solvers and Green's tables.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + NumCast + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` constant, panicking only if the type cannot hold it.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }

    /// Converts to `f64` for reporting.
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
