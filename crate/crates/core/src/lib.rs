//! Exact and numerical verification of leading-order trace asymptotics for
//! equivariant Toeplitz operators twisted by diagonal quantomorphisms, on
//! weighted torus actions on complex projective space.
//!
//! Exact quantities (isotype bases, dimensions, Toeplitz entries, traces,
//! fixed-point combinatorics) use arbitrary precision integers and
//! rationals. Kernels, Gaussians and quadrature are generic over [`Real`].

pub mod asymptotic_law;
pub mod error;
pub mod hardy;
pub mod harness;
pub mod kernel_probe;
pub mod linalg;
pub mod quadrature;
pub mod scalar;
pub mod toeplitz_trace;
pub mod torus_action;

pub use error::{Error, Result};
pub use scalar::{Real, Scalar};

/// Exact rational scalar.
pub type Rational = num_rational::BigRational;
/// Exact complex number with rational parts.
pub type ExactComplex = num_complex::Complex<Rational>;
pub type Complex64 = num_complex::Complex<f64>;
pub type Complex32 = num_complex::Complex<f32>;
