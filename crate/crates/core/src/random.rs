//! Seeded random sources and the handful of draws the models need.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::num::Real;

pub type SimRng = ChaCha8Rng;

/// Independent stream derived from a base seed. Stream ids let parallel
/// workers reproduce the same draws regardless of scheduling.
pub fn derive_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pack up to three indices into a stream id.
pub fn stream_id(a: u64, b: u64, c: u64) -> u64 {
    (a << 42) ^ (b << 21) ^ c
}

pub fn gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> f64 {
    Gamma::new(shape, 1.0 / rate)
        .expect("gamma parameters must be positive")
        .sample(rng)
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Dirichlet draw through normalised Gamma variates.
pub fn dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut x: Vec<f64> = alpha.iter().map(|&a| gamma(a, 1.0, rng)).collect();
    let s: f64 = x.iter().sum();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    } else {
        // All gamma draws underflowed: fall back to the largest concentration.
        let k = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(k, _)| k);
        x.iter_mut().for_each(|v| *v = 0.0);
        x[k] = 1.0;
    }
    x
}

/// Index drawn with probability proportional to `weights`.
pub fn categorical<F: Real, R: Rng + ?Sized>(weights: &[F], rng: &mut R) -> usize {
    let total: f64 = weights.iter().map(|w| w.f64()).sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, w) in weights.iter().enumerate() {
        let w = w.f64();
        if w > 0.0 {
            acc += w;
            last_positive = k;
            if u < acc {
                return k;
            }
        }
    }
    last_positive
}
