//! Baseline mark models: a first-order Markov chain over marks and a
//! homogeneous Poisson process over (mark, zone) cells.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::event::Dataset;
use crate::num::Real;

/// Transition probabilities `theta[(z, m_prev) → m]`, row-major over
/// `zone * M + m_prev`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomcParams<F> {
    pub n_zones: usize,
    pub n_marks: usize,
    pub theta: Vec<F>,
}

impl<F: Real> FomcParams<F> {
    pub fn uniform(n_zones: usize, n_marks: usize) -> Self {
        FomcParams {
            n_zones,
            n_marks,
            theta: vec![F::one() / F::of_usize(n_marks); n_zones * n_marks * n_marks],
        }
    }

    pub fn row(&self, zone: usize, prev: usize) -> &[F] {
        let m = self.n_marks;
        let r = zone * m + prev;
        &self.theta[r * m..(r + 1) * m]
    }
}

pub fn fomc_log_pmf<F: Real>(p: &FomcParams<F>, zone: usize, prev: usize, mark: usize) -> F {
    p.row(zone, prev)[mark].ln()
}

/// Transition counts `[(z, m_prev) → m]` over modelled events.
pub fn fomc_counts(ds: &Dataset) -> Vec<u64> {
    let (m, z) = (ds.n_marks(), ds.zones);
    let mut out = vec![0; z * m * m];
    for p in &ds.periods {
        for w in p.events.windows(2) {
            let r = w[1].zone.index() * m + w[0].mark.index();
            out[r * m + w[1].mark.index()] += 1;
        }
    }
    out
}

/// Rates `rho[z * M + m]` in events per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsthpParams<F> {
    pub n_zones: usize,
    pub n_marks: usize,
    pub rho: Vec<F>,
}

impl<F: Real> MsthpParams<F> {
    pub fn rate(&self, zone: usize, mark: usize) -> F {
        self.rho[zone * self.n_marks + mark]
    }

    pub fn total_rate(&self) -> F {
        self.rho.iter().copied().sum()
    }
}

/// Cell counts `q[z * M + m]` of modelled events and the summed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct MsthpCounts {
    pub q: Vec<u64>,
    pub horizon: f64,
}

pub fn msthp_counts(ds: &Dataset) -> MsthpCounts {
    let m = ds.n_marks();
    let mut q = vec![0; ds.zones * m];
    for p in &ds.periods {
        for e in p.modelled() {
            q[e.zone.index() * m + e.mark.index()] += 1;
        }
    }
    MsthpCounts {
        q,
        horizon: ds.total_horizon(),
    }
}

/// `Σ q log ρ − T ρ` with `0 log 0 = 0`; `-inf` when a positive count meets
/// a zero rate.
pub fn msthp_log_lik<F: Real>(q: &[u64], horizon: f64, p: &MsthpParams<F>) -> Result<F> {
    if !(horizon > 0.0) {
        return Err(invalid(format!("observation horizon must be positive, got {horizon}")));
    }
    if q.len() != p.rho.len() {
        return Err(invalid("count table and rate table differ in size"));
    }
    let t = F::of(horizon);
    let mut total = F::zero();
    for (&n, &r) in q.iter().zip(&p.rho) {
        if n > 0 {
            total += F::of(n as f64) * r.ln();
        }
        total -= t * r;
    }
    Ok(total)
}

/// Log density of one event: cell rate times the probability of no event
/// anywhere during the preceding gap `dt`.
pub fn msthp_event_log_lik<F: Real>(p: &MsthpParams<F>, zone: usize, mark: usize, dt: f64) -> F {
    p.rate(zone, mark).ln() - p.total_rate() * F::of(dt)
}
