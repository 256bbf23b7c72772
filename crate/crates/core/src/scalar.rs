//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real floating point scalar: implemented for `f32` and `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` literal into this scalar type.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    /// Tolerance used by iterative kernels (Newton on Legendre roots, etc.).
    fn iteration_tolerance() -> Self;
}

impl Real for f64 {
    fn iteration_tolerance() -> Self {
        1e-15
    }
}

impl Real for f32 {
    fn iteration_tolerance() -> Self {
        4.0 * f32::EPSILON
    }
}

/// `(-1)^j` computed from integer parity.
#[inline]
pub fn parity_sign<T: Real>(j: usize) -> T {
    if j % 2 == 0 {
        T::one()
    } else {
        -T::one()
    }
}

pub(crate) fn ensure_finite<T: Real>(values: &[T], what: &str) -> crate::Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::NonFinite(what.to_string()))
    }
}
