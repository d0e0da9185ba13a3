//! Maps between unconstrained coordinates and constrained parameter values.
//!
//! Simplexes use stick-breaking: with `k` categories,
//! `z_i = logistic(u_i − ln(k − 1 − i))`, `x_i = z_i (1 − Σ_{j<i} x_j)`,
//! so `u = 0` lands on the uniform simplex.

use crate::num::{logistic, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    /// `x = exp(u)`.
    Positive,
    /// `x = u`.
    Real,
    /// Stick-breaking onto a simplex with one more entry than coordinates.
    Simplex,
}

impl Transform {
    /// Unconstrained dimension for `len` constrained values.
    pub fn free_dim(self, len: usize) -> usize {
        match self {
            Transform::Simplex => len.saturating_sub(1),
            _ => len,
        }
    }

    /// Fill `x` from `u` and return the log-Jacobian.
    pub fn forward<F: Real>(self, u: &[F], x: &mut [F]) -> F {
        match self {
            Transform::Positive => {
                let mut lj = F::zero();
                for (xi, &ui) in x.iter_mut().zip(u) {
                    *xi = ui.exp();
                    lj += ui;
                }
                lj
            }
            Transform::Real => {
                x.copy_from_slice(u);
                F::zero()
            }
            Transform::Simplex => simplex_forward(u, x),
        }
    }

    /// Gradient with respect to `u` of `f(x(u)) + logJ(u)` given `∂f/∂x`.
    pub fn backward<F: Real>(self, u: &[F], x: &[F], gx: &[F], gu: &mut [F]) {
        match self {
            Transform::Positive => {
                for i in 0..u.len() {
                    gu[i] = gx[i] * x[i] + F::one();
                }
            }
            Transform::Real => gu.copy_from_slice(gx),
            Transform::Simplex => simplex_backward(u, gx, gu),
        }
    }

    /// Unconstrained coordinates of a constrained value.
    pub fn inverse(self, x: &[f64], u: &mut [f64]) {
        match self {
            Transform::Positive => {
                for (ui, &xi) in u.iter_mut().zip(x) {
                    *ui = xi.ln();
                }
            }
            Transform::Real => u.copy_from_slice(x),
            Transform::Simplex => simplex_inverse(x, u),
        }
    }
}

#[inline]
fn offset<F: Real>(k: usize, i: usize) -> F {
    F::of_usize(k - 1 - i).ln()
}

pub fn simplex_forward<F: Real>(u: &[F], x: &mut [F]) -> F {
    let k = x.len();
    debug_assert_eq!(u.len() + 1, k);
    let mut rem = F::one();
    let mut lj = F::zero();
    for i in 0..k - 1 {
        let z = logistic(u[i] - offset(k, i));
        lj += z.ln() + (F::one() - z).ln() + rem.ln();
        x[i] = rem * z;
        rem = rem * (F::one() - z);
    }
    x[k - 1] = rem;
    lj
}

pub fn simplex_backward<F: Real>(u: &[F], gx: &[F], gu: &mut [F]) {
    let k = gx.len();
    let mut z = Vec::with_capacity(k - 1);
    let mut rems = Vec::with_capacity(k - 1);
    let mut rem = F::one();
    for i in 0..k - 1 {
        let zi = logistic(u[i] - offset(k, i));
        z.push(zi);
        rems.push(rem);
        rem = rem * (F::one() - zi);
    }
    let two = F::of(2.0);
    let mut g_rem = gx[k - 1];
    for i in (0..k - 1).rev() {
        let (zi, ri) = (z[i], rems[i]);
        let g_z = (gx[i] - g_rem) * ri;
        gu[i] = g_z * zi * (F::one() - zi) + F::one() - two * zi;
        g_rem = gx[i] * zi + g_rem * (F::one() - zi) + F::one() / ri;
    }
}

pub fn simplex_inverse(x: &[f64], u: &mut [f64]) {
    let k = x.len();
    let mut rem = 1.0;
    for i in 0..k - 1 {
        let z = if rem > 0.0 { (x[i] / rem).clamp(1e-300, 1.0 - 1e-16) } else { 0.5 };
        u[i] = (z / (1.0 - z)).ln() + offset::<f64>(k, i);
        rem -= x[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn simplex_round_trip(u in proptest::collection::vec(-4.0f64..4.0, 1..12)) {
            let mut x = vec![0.0; u.len() + 1];
            simplex_forward(&u, &mut x);
            prop_assert!((x.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(x.iter().all(|&v| v > 0.0));
            let mut back = vec![0.0; u.len()];
            simplex_inverse(&x, &mut back);
            for (a, b) in u.iter().zip(&back) {
                prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_maps_to_uniform() {
        let mut x = [0.0; 5];
        simplex_forward(&[0.0f64; 4], &mut x);
        for v in x {
            assert_relative_eq!(v, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let u = [0.3, -1.2, 0.7, 0.05];
        let w = [0.5, -2.0, 1.5, 0.3, -0.7];
        let f = |u: &[f64]| {
            let mut x = [0.0; 5];
            let lj = simplex_forward(u, &mut x);
            x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + lj
        };
        let mut x = [0.0; 5];
        simplex_forward(&u, &mut x);
        let mut g = [0.0; 4];
        simplex_backward(&u, &w, &mut g);
        for i in 0..4 {
            let (mut a, mut b) = (u, u);
            a[i] += 1e-6;
            b[i] -= 1e-6;
            assert_relative_eq!(g[i], (f(&a) - f(&b)) / 2e-6, epsilon = 1e-7);
        }
    }

    #[test]
    fn log_jacobian_matches_determinant() {
        // k = 2: x0 = logistic(u), dx0/du = x0 (1 - x0)
        let u = [0.8f64];
        let mut x = [0.0; 2];
        let lj = simplex_forward(&u, &mut x);
        assert_relative_eq!(lj, (x[0] * (1.0 - x[0])).ln(), epsilon = 1e-14);
    }

    #[test]
    fn positive_transform() {
        let mut x = [0.0];
        let lj = Transform::Positive.forward(&[0.5f64], &mut x);
        assert_relative_eq!(x[0], 0.5f64.exp());
        assert_eq!(lj, 0.5);
        let mut g = [0.0];
        Transform::Positive.backward(&[0.5], &x, &[2.0], &mut g);
        assert_relative_eq!(g[0], 2.0 * x[0] + 1.0);
    }
}
