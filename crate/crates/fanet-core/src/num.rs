//! Scalar abstraction: every numeric kernel in this crate is generic over
//! [`Real`], instantiated as `f32` or `f64`. The shipped pipeline and all
//! file formats use `f64` (see the aliases at the crate root).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssignOps + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float + FromPrimitive + ToPrimitive + NumAssignOps + Debug + Display + Send + Sync + 'static
{
}

/// Lifts an `f64` literal into the working scalar type.
#[inline]
pub(crate) fn real<R: Real>(x: f64) -> R {
    R::from_f64(x).expect("literal representable in scalar type")
}

/// Lifts a `usize` count into the working scalar type.
#[inline]
pub(crate) fn count<R: Real>(n: usize) -> R {
    R::from_usize(n).expect("count representable in scalar type")
}
