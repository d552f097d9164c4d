//! Scalar abstractions.
//!
//! Geometry that is affine in the simplex coordinates (moment map, convex
//! combinations) is written once against [`Scalar`] and runs on `f32`, `f64`
//! and exact [`Rational`](crate::Rational). Anything transcendental (kernels,
//! Gaussians, quadrature) needs [`Real`].

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, FloatConst, FromPrimitive, Num, NumAssign, ToPrimitive};

/// A field element we can build from integers: `f32`, `f64` or `BigRational`.
pub trait Scalar: Clone + Debug + PartialOrd + Num + FromPrimitive {
    fn from_integer(n: i64) -> Self {
        Self::from_i64(n).expect("integer is representable")
    }

    fn from_bigint(n: &BigInt) -> Self;

    fn from_rational(r: &BigRational) -> Self {
        Self::from_bigint(r.numer()) / Self::from_bigint(r.denom())
    }
}

impl Scalar for f32 {
    fn from_bigint(n: &BigInt) -> Self {
        n.to_f32().unwrap_or(f32::NAN)
    }
}

impl Scalar for f64 {
    fn from_bigint(n: &BigInt) -> Self {
        n.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for BigRational {
    fn from_bigint(n: &BigInt) -> Self {
        BigRational::from_integer(n.clone())
    }

    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
}

/// Floating point scalars used for analytic and numerical routines.
pub trait Real:
    Scalar + Float + FloatConst + NumAssign + Copy + Send + Sync + Default + 'static
{
    fn from_f64(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 converts")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Lossy conversion of an exact rational into a float type.
pub fn rational_to<T: Real>(r: &BigRational) -> T {
    // Ratios of huge integers overflow when converted separately.
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => <T as Real>::from_f64(n / d),
        _ => {
            let bits = r.numer().bits().max(r.denom().bits()) as i64;
            let shift = (bits - 900).max(0) as usize;
            let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift).to_f64().unwrap_or(1.0);
            <T as Real>::from_f64(n / d)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn midpoint<S: Scalar>(a: S, b: S) -> S {
        (a + b) / S::from_integer(2)
    }

    #[test]
    fn midpoint_is_exact_on_rationals_and_close_on_floats() {
        let a = BigRational::new(1.into(), 3.into());
        let b = BigRational::new(1.into(), 6.into());
        assert_eq!(midpoint(a, b), BigRational::new(1.into(), 4.into()));
        assert!((midpoint(1.0f32, 2.0f32) - 1.5).abs() < 1e-7);
        assert!((midpoint(1.0f64, 2.0f64) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn huge_rationals_convert_without_overflow() {
        let big = BigInt::from(10).pow(400);
        let r = BigRational::new(big.clone() * 3, big * 4);
        assert!((rational_to::<f64>(&r) - 0.75).abs() < 1e-15);
    }
}
