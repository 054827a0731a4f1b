//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! Storage and interface values are `T: Scalar`; reductions (transform sums,
//! dot products, norms) run in `T::Acc`, which is `f64` for both supported
//! float types so single-precision inputs keep double-precision accuracy.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Accumulator type used for reductions.
pub trait Accumulator: Float + FftNum + FromPrimitive + ToPrimitive + Debug + Display {}

impl Accumulator for f64 {}

/// A real floating-point scalar usable as embedding storage.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static {
    type Acc: Accumulator;

    /// Max abs error accepted for `inverse(forward(x))` at this precision.
    const ROUNDTRIP_TOLERANCE: f64;

    fn widen(self) -> Self::Acc;
    fn narrow(acc: Self::Acc) -> Self;

    fn from_single(v: f32) -> Self;
    fn to_single(self) -> f32;

    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }
    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    type Acc = f64;
    const ROUNDTRIP_TOLERANCE: f64 = 1e-5;

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }
    #[inline]
    fn narrow(acc: f64) -> f32 {
        acc as f32
    }
    #[inline]
    fn from_single(v: f32) -> f32 {
        v
    }
    #[inline]
    fn to_single(self) -> f32 {
        self
    }
}

impl Scalar for f64 {
    type Acc = f64;
    const ROUNDTRIP_TOLERANCE: f64 = 1e-10;

    #[inline]
    fn widen(self) -> f64 {
        self
    }
    #[inline]
    fn narrow(acc: f64) -> f64 {
        acc
    }
    #[inline]
    fn from_single(v: f32) -> f64 {
        v as f64
    }
    #[inline]
    fn to_single(self) -> f32 {
        self as f32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_widens_exactly() {
        let v = 0.1f32;
        assert_eq!(v.widen(), 0.1f32 as f64);
        assert_eq!(<f32 as Scalar>::narrow(v.widen()), v);
    }

    #[test]
    fn lossy_conversion_of_huge_value() {
        assert!(<f32 as Scalar>::from_f64_lossy(1e300).is_infinite());
    }
}
