//! Scalar traits used by the region-lattice algebra.
//!
//! The lattice transforms, Weingarten weights and fusion coefficients only
//! need field arithmetic, so they are generic over [`Scalar`] and work for
//! `f32`, `f64` and exact rationals alike. Anything that pivots, takes square
//! roots or compares magnitudes requires [`Real`].

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, Neg, SubAssign};

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num};

/// Field element usable in lattice arithmetic.
pub trait Scalar:
    Num + Copy + Neg<Output = Self> + AddAssign + SubAssign + MulAssign + Debug + Send + Sync + 'static
{
    fn from_i64(v: i64) -> Self;

    /// Nearest `f64`, used for magnitude checks.
    fn approx_f64(self) -> f64;

    /// `self^k` by repeated squaring; `k` may be negative.
    fn powi_exact(self, k: i32) -> Self {
        let mut base = if k < 0 { Self::one() / self } else { self };
        let mut e = k.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }
}

/// Real floating-point scalar.
pub trait Real: Scalar + Float + FromPrimitive + Sum + std::fmt::Display {}

impl Scalar for f64 {
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn approx_f64(self) -> f64 {
        self
    }
}
impl Scalar for f32 {
    fn from_i64(v: i64) -> Self {
        v as f32
    }
    fn approx_f64(self) -> f64 {
        self as f64
    }
}
impl Scalar for Ratio<i64> {
    fn from_i64(v: i64) -> Self {
        Ratio::from_integer(v)
    }
    fn approx_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f64 {}
impl Real for f32 {}
