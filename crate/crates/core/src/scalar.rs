//! Scalar abstraction shared by the geometry, factor, solver and metric code.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the estimator: `f32` or `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::Debug + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + std::fmt::Debug + Send + Sync + 'static
{
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

/// Lossy conversion back to `f64` for reporting.
#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Converts between scalar types by way of `f64`.
#[inline]
pub fn cast<T: Real, U: Real>(v: T) -> U {
    lit(to_f64(v))
}
