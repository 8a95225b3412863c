//! Scalar abstraction shared by every numeric module.
//!
//! All math in this crate is written against [`Scalar`], which is implemented
//! for `f32` and `f64`. The error function is delegated to `libm`, so both
//! precisions get a correctly rounded-ish `erf`/`erfc` rather than a short
//! rational approximation.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real floating-point type usable throughout the crate.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Error function.
    fn erf(self) -> Self;

    /// Complementary error function, `1 - erf(x)` without cancellation.
    fn erfc(self) -> Self;

    /// Converts an `f64` literal. Panics only if the value is unrepresentable,
    /// which cannot happen for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    /// Converts a count.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
}

/// Standard normal CDF, `Φ(z) = erfc(-z/√2) / 2`.
#[inline]
pub fn std_normal_cdf<T: Scalar>(z: T) -> T {
    T::lit(0.5) * (-z / T::lit(std::f64::consts::SQRT_2)).erfc()
}

/// Standard normal density.
#[inline]
pub fn std_normal_pdf<T: Scalar>(z: T) -> T {
    let inv_sqrt_2pi = T::lit(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(z * z) / T::lit(2.0)).exp()
}
