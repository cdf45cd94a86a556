//! Scalar abstraction: every numeric routine in this crate is generic over
//! a floating-point type so the same code runs in f32 and f64.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar for model math, attack scoring, and metrics.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Debug + Display + Default + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into the scalar type.
///
/// Every finite `f64` is representable in both supported scalars (f32 loses
/// precision but stays finite for the magnitudes used here).
pub fn from_f64<F: Scalar>(x: f64) -> F {
    <F as FromPrimitive>::from_f64(x).expect("finite f64 converts to scalar")
}

/// Widen a scalar to `f64` for reporting and serialization.
pub fn to_f64<F: Scalar>(x: F) -> f64 {
    <F as ToPrimitive>::to_f64(&x).expect("scalar converts to f64")
}

/// Dot product. Lengths must match.
pub fn dot<F: Scalar>(u: &[F], v: &[F]) -> F {
    debug_assert_eq!(u.len(), v.len());
    u.iter()
        .zip(v.iter())
        .fold(F::zero(), |acc, (&a, &b)| acc + a * b)
}

/// Euclidean norm.
pub fn norm<F: Scalar>(u: &[F]) -> F {
    dot(u, u).sqrt()
}
