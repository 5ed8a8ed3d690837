//! Scalar abstraction shared by every field and operator.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar usable by the grid operators, the energy and the solver.
///
/// Implemented for `f32` and `f64`. Relative tolerances quoted for `f64`
/// are widened to a multiple of the machine epsilon in lower precision, see
/// [`Real::tol`].
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + FftNum + Default + Display + LowerExp + Debug
{
    /// Converts an `f64` literal.
    #[inline(always)]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("literal representable")
    }

    #[inline(always)]
    fn from_usize_lossy(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }

    #[inline(always)]
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// `max(rel, 1000 eps)`: a relative tolerance this precision can honour.
    #[inline]
    fn tol(rel: f64) -> f64 {
        rel.max(1e3 * Self::epsilon().as_f64())
    }
}

impl Real for f32 {}
impl Real for f64 {}
