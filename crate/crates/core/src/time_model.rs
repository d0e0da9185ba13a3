//! Mark-conditional Gamma model for inter-arrival times.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Dataset, MarkId};
use crate::num::Real;
use crate::random;

/// Shape and rate (1/seconds) of the waiting time after each mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeParams<F> {
    pub shape: Vec<F>,
    pub rate: Vec<F>,
}

impl<F: Real> TimeParams<F> {
    pub fn uniform(n_marks: usize, shape: F, rate: F) -> Self {
        TimeParams {
            shape: vec![shape; n_marks],
            rate: vec![rate; n_marks],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shape.len() != self.rate.len() {
            return Err(Error::Domain("shape and rate lengths differ".into()));
        }
        if self
            .shape
            .iter()
            .chain(&self.rate)
            .any(|&x| !(x > F::zero()) || !x.is_finite())
        {
            return Err(Error::Domain("gamma shape and rate must be positive".into()));
        }
        Ok(())
    }
}

/// Rates of the exponential priors on shape and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimePrior<F> {
    pub shape_rate: F,
    pub rate_rate: F,
}

impl<F: Real> Default for TimePrior<F> {
    fn default() -> Self {
        TimePrior {
            shape_rate: F::of(0.01),
            rate_rate: F::of(0.01),
        }
    }
}

/// Gamma(shape, rate) log-density at `x > 0`.
#[inline]
pub fn gamma_log_density<F: Real>(x: F, shape: F, rate: F) -> F {
    shape * rate.ln() - shape.ln_gamma() + (shape - F::one()) * x.ln() - rate * x
}

/// Log-density of waiting `dt` seconds after an event of mark `prev`.
pub fn time_log_density<F: Real>(dt: F, prev: MarkId, p: &TimeParams<F>) -> Result<F> {
    if !(dt > F::zero()) {
        return Err(Error::Domain(format!("inter-arrival time must be positive, got {dt}")));
    }
    let k = prev.index();
    Ok(gamma_log_density(dt, p.shape[k], p.rate[k]))
}

/// Partial derivatives of the Gamma log-density with respect to shape and rate.
#[inline]
pub fn gamma_log_density_grad<F: Real>(x: F, shape: F, rate: F) -> (F, F) {
    (rate.ln() - shape.digamma() + x.ln(), shape / rate - x)
}

pub fn time_log_prior<F: Real>(p: &TimeParams<F>, pr: &TimePrior<F>) -> F {
    let a: F = p
        .shape
        .iter()
        .map(|&a| pr.shape_rate.ln() - pr.shape_rate * a)
        .sum();
    let b: F = p
        .rate
        .iter()
        .map(|&b| pr.rate_rate.ln() - pr.rate_rate * b)
        .sum();
    a + b
}

pub fn sample_interarrival<F: Real, R: Rng + ?Sized>(
    prev: MarkId,
    p: &TimeParams<F>,
    rng: &mut R,
) -> F {
    let k = prev.index();
    F::of(random::gamma(p.shape[k].f64(), p.rate[k].f64(), rng))
}

/// Per-mark sufficient statistics of the waiting times that follow it.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeStats {
    pub count: Vec<f64>,
    pub sum_log: Vec<f64>,
    pub sum: Vec<f64>,
}

impl TimeStats {
    pub fn from_dataset(ds: &Dataset) -> Self {
        let m = ds.n_marks();
        let mut st = TimeStats {
            count: vec![0.0; m],
            sum_log: vec![0.0; m],
            sum: vec![0.0; m],
        };
        for p in &ds.periods {
            for w in p.events.windows(2) {
                let k = w[0].mark.index();
                let dt = w[1].t - w[0].t;
                st.count[k] += 1.0;
                st.sum_log[k] += dt.ln();
                st.sum[k] += dt;
            }
        }
        st
    }

    /// Time block log-likelihood, accumulating gradients if requested.
    pub fn log_lik<F: Real>(&self, p: &TimeParams<F>, grad: Option<(&mut [F], &mut [F])>) -> F {
        let mut total = F::zero();
        let mut grad = grad;
        for k in 0..self.count.len() {
            if self.count[k] == 0.0 {
                continue;
            }
            let (n, sl, s) = (F::of(self.count[k]), F::of(self.sum_log[k]), F::of(self.sum[k]));
            let (a, b) = (p.shape[k], p.rate[k]);
            total += n * (a * b.ln() - a.ln_gamma()) + (a - F::one()) * sl - b * s;
            if let Some((ga, gb)) = grad.as_mut() {
                ga[k] += n * (b.ln() - a.digamma()) + sl;
                gb[k] += n * a / b - s;
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::derive_rng;

    fn params(a: f64, b: f64) -> TimeParams<f64> {
        TimeParams::uniform(1, a, b)
    }

    #[test]
    fn closed_form_values() {
        let got = time_log_density(0.5, MarkId(1), &params(1.0, 2.0)).unwrap();
        assert!((got - (2f64.ln() - 1.0)).abs() < 1e-12);
        assert!((got + 0.306_852_819_440_054_7).abs() < 1e-12);
        let got = time_log_density(1.0, MarkId(1), &params(2.0, 1.0)).unwrap();
        assert!((got + 1.0).abs() < 1e-12);
        for dt in [0.1, 1.0, 7.5] {
            let b0 = 0.7;
            let got = time_log_density(dt, MarkId(1), &params(1.0, b0)).unwrap();
            assert!((got - (b0.ln() - b0 * dt)).abs() < 1e-12);
        }
        assert!(time_log_density(0.0, MarkId(1), &params(1.0, 1.0)).is_err());
        assert!(time_log_density(-1.0, MarkId(1), &params(1.0, 1.0)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = TimeParams::<f32>::uniform(1, 1.0, 2.0);
        let got = time_log_density(0.5f32, MarkId(1), &p).unwrap();
        assert!((got - (2f32.ln() - 1.0)).abs() < 1e-6);
    }

    #[test]
    fn prior_values() {
        let p = params(1.0, 1.0);
        let pr = TimePrior {
            shape_rate: 1.0,
            rate_rate: 1.0,
        };
        assert!((time_log_prior(&p, &pr) + 2.0).abs() < 1e-12);
        let two = TimeParams::uniform(2, 1.0, 1.0);
        assert!((time_log_prior(&two, &pr) + 4.0).abs() < 1e-12);
        let d = TimePrior::<f64>::default();
        assert_eq!((d.shape_rate, d.rate_rate), (0.01, 0.01));
        assert!(time_log_prior(&p, &d).is_finite());
    }

    /// Composite Simpson rule on a log-spaced grid.
    fn integrate_density(a: f64, b: f64) -> f64 {
        let (lo, hi) = ((1e-14f64).ln(), (200.0 / b + 50.0 * a / b).ln());
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let f = |u: f64| {
            let x = u.exp();
            gamma_log_density(x, a, b).exp() * x
        };
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn density_integrates_to_one() {
        for &a in &[1.0, 1.5, 3.0, 8.0] {
            for &b in &[0.2, 1.0, 4.0] {
                let mass = integrate_density(a, b);
                assert!((mass - 1.0).abs() < 1e-6, "a={a} b={b} mass={mass}");
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let h = 1e-6;
        for &(x, a, b) in &[(0.3f64, 1.2f64, 0.8f64), (2.0, 3.5, 1.7), (10.0, 0.7, 0.1)] {
            let (ga, gb) = gamma_log_density_grad(x, a, b);
            let fa = (gamma_log_density(x, a + h, b) - gamma_log_density(x, a - h, b)) / (2.0 * h);
            let fb = (gamma_log_density(x, a, b + h) - gamma_log_density(x, a, b - h)) / (2.0 * h);
            assert!(((ga - fa) / fa.abs().max(1e-8)).abs() < 1e-4);
            assert!(((gb - fb) / fb.abs().max(1e-8)).abs() < 1e-4);
        }
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let n = 100_000;
        let mut rng = derive_rng(42, 0);
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_interarrival(MarkId(1), &params(1.0, 1.0), &mut rng))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 / (n as f64).sqrt());
        assert!(xs.iter().all(|&x| x > 0.0));

        let mut rng = derive_rng(43, 0);
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_interarrival(MarkId(1), &params(4.0, 2.0), &mut rng))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        // sd of the mean is 1/sqrt(n); var(s²) ≈ (μ4 - σ⁴)/n with μ4 = 3a(a+2)/b⁴ = 4.5
        assert!((mean - 2.0).abs() < 3.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 3.0 * (3.5 / n as f64).sqrt());

        let a: Vec<f64> = {
            let mut r = derive_rng(7, 0);
            (0..5).map(|_| sample_interarrival(MarkId(1), &params(2.0, 1.0), &mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = derive_rng(7, 0);
            (0..5).map(|_| sample_interarrival(MarkId(1), &params(2.0, 1.0), &mut r)).collect()
        };
        assert_eq!(a, b);
    }
}
