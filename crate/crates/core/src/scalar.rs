//! Floating-point abstraction for the numeric core.
//!
//! Everything numeric in this crate is written against [`Scalar`] so the same
//! code runs in `f32` and `f64`. The shipped binaries use `f64` (see
//! [`crate::Real`]); `f32` exists for memory-bound embedding of the library
//! and is covered by a small instantiation test.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating-point scalar with the few extras the crate needs beyond
/// [`num_traits::Float`]: the standard normal CDF and density.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Standard normal cumulative distribution function.
    ///
    /// Computed through `erfc` so that `norm_cdf(x) + norm_cdf(-x) == 1`
    /// holds to machine precision; pairwise contest probabilities rely on
    /// that complementarity.
    fn norm_cdf(self) -> Self;

    /// Standard normal density.
    fn norm_pdf(self) -> Self {
        let two = Self::one() + Self::one();
        (-(self * self) / two).exp() / (two * Self::PI()).sqrt()
    }
}

impl Scalar for f64 {
    fn norm_cdf(self) -> Self {
        0.5 * libm::erfc(-self / f64::SQRT_2())
    }
}

impl Scalar for f32 {
    fn norm_cdf(self) -> Self {
        (f64::from(self)).norm_cdf() as f32
    }
}

/// Converts an `f64` constant into the working scalar type.
///
/// Total for `f32`/`f64`: every finite `f64` has a representation (possibly
/// rounded, possibly infinite for out-of-range `f32`), so this never panics
/// on the constants the crate feeds it.
pub fn fl<F: Scalar>(v: f64) -> F {
    F::from(v).expect("f64 constant convertible to scalar")
}

/// Converts a count into the working scalar type.
pub fn fl_usize<F: Scalar>(n: usize) -> F {
    F::from_usize(n).expect("count convertible to scalar")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn norm_cdf_reference_values() {
        // Φ(0) = 1/2, Φ(1) ≈ 0.841345, Φ(-1.96) ≈ 0.0249979.
        assert!((0.0f64.norm_cdf() - 0.5).abs() < 1e-15);
        assert!((1.0f64.norm_cdf() - 0.841_344_746_068_543).abs() < 1e-9);
        assert!(((-1.96f64).norm_cdf() - 0.024_997_895_148_221).abs() < 1e-9);
    }

    #[test]
    fn norm_cdf_complementarity() {
        for i in 0..200 {
            let x = -5.0 + 0.05 * f64::from(i);
            let s = x.norm_cdf() + (-x).norm_cdf();
            assert!((s - 1.0).abs() < 1e-15, "x={x} sum={s}");
        }
    }

    #[test]
    fn norm_pdf_matches_closed_form() {
        let v: f64 = 0.0f64.norm_pdf();
        assert!((v - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn f32_instantiation() {
        let v: f32 = 1.0f32.norm_cdf();
        assert!((v - 0.841_344_7).abs() < 1e-6);
        let c: f32 = fl(0.25);
        assert_eq!(c, 0.25f32);
    }
}
