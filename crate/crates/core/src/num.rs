//! Scalar abstraction shared by every model component.
//!
//! All densities, transforms and gradients are written against [`Real`] so
//! the library can be instantiated at `f32` or `f64`. Special functions are
//! evaluated in double precision and cast back.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    fn ln_gamma(self) -> Self {
        Self::of(statrs::function::gamma::ln_gamma(self.f64()))
    }

    fn digamma(self) -> Self {
        Self::of(statrs::function::gamma::digamma(self.f64()))
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable `ln(Σ exp(x_i))`; `-inf` for an empty slice.
pub fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let max = xs.iter().copied().fold(F::neg_infinity(), F::max);
    if !max.is_finite() {
        return max;
    }
    let s: F = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// `ln((1/n) Σ exp(x_i))`.
pub fn log_mean_exp<F: Real>(xs: &[F]) -> F {
    log_sum_exp(xs) - F::of_usize(xs.len()).ln()
}

/// Pairwise summation, insensitive to the order in which partial results
/// were produced by parallel workers up to floating point tolerance.
pub fn pairwise_sum<F: Real>(xs: &[F]) -> F {
    if xs.len() <= 8 {
        return xs.iter().copied().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[inline]
pub(crate) fn logistic<F: Real>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_naive() {
        let xs = [0.1f64, -2.0, 3.5];
        let naive = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - naive).abs() < 1e-12);
        assert!(log_sum_exp::<f64>(&[]).is_infinite());
    }

    #[test]
    fn log_mean_exp_of_two() {
        let (l1, l2) = (0.2f64, 0.6f64);
        let got = log_mean_exp(&[l1.ln(), l2.ln()]);
        assert!((got - 0.4f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn special_functions_in_single_precision() {
        assert!(Real::ln_gamma(2.0f32).abs() < 1e-6);
        assert!((Real::digamma(1.0f32) + 0.577_215_7).abs() < 1e-5);
    }
}
