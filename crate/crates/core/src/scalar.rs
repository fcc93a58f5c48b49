//! Scalar abstraction shared by every numerical routine in the crate.
//!
//! All algorithms are written against [`Real`], which is implemented for
//! `f32` and `f64`. Complex arithmetic goes through [`num_complex::Complex`].

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::ScalarOperand;
use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + ScalarOperand
    + Default
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
    + Field<Real = Self>
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    /// Converts a count into this scalar type.
    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Field element usable in the dense LU solver: a real scalar or a complex
/// number over one.
pub trait Field:
    Copy
    + NumAssign
    + std::ops::Neg<Output = Self>
    + Debug
    + Send
    + Sync
    + 'static
{
    type Real: Real;
    fn modulus(self) -> Self::Real;
    fn from_real(x: Self::Real) -> Self;
}

impl Field for f32 {
    type Real = f32;
    fn modulus(self) -> f32 {
        self.abs()
    }
    fn from_real(x: f32) -> f32 {
        x
    }
}

impl Field for f64 {
    type Real = f64;
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> f64 {
        x
    }
}

impl<T: Real> Field for Complex<T> {
    type Real = T;
    fn modulus(self) -> T {
        self.norm()
    }
    fn from_real(x: T) -> Self {
        Complex::new(x, T::zero())
    }
}
