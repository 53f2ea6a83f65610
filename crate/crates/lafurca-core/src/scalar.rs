//! Floating-point precision abstraction.
//!
//! Gradient verification runs in `f64`, training runs in `f32`; everything
//! numeric in this crate is generic over [`Scalar`] so both share one code
//! path.

use num_traits::Float;
use rand::distr::uniform::SampleUniform;

/// Element type for tensors, parameters and signals.
pub trait Scalar:
    Float + SampleUniform + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Convenience conversion for literals in generic code.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from_f64(x)
}
