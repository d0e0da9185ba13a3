//! Closed-form posteriors of the conjugate blocks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Priors;
use crate::error::Result;
use crate::event::Dataset;
use crate::marks::{fomc_counts, msthp_counts, FomcParams, MsthpParams};
use crate::random;
use crate::zone_model::{zone_posterior, zone_transition_counts, ZonePosterior};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConjugateBlock {
    Zone,
    Fomc,
    Msthp,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConjugatePosterior {
    Zone(ZonePosterior),
    Fomc(FomcPosterior),
    Msthp(MsthpPosterior),
}

/// Dirichlet concentrations of every `(zone, previous mark)` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FomcPosterior {
    pub n_zones: usize,
    pub n_marks: usize,
    pub alpha: Vec<f64>,
}

impl FomcPosterior {
    pub fn row(&self, zone: usize, prev: usize) -> &[f64] {
        let m = self.n_marks;
        let r = zone * m + prev;
        &self.alpha[r * m..(r + 1) * m]
    }

    pub fn mean(&self) -> FomcParams<f64> {
        let m = self.n_marks;
        let theta = self
            .alpha
            .chunks(m)
            .flat_map(|row| {
                let s: f64 = row.iter().sum();
                row.iter().map(move |a| a / s)
            })
            .collect();
        FomcParams {
            n_zones: self.n_zones,
            n_marks: m,
            theta,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> FomcParams<f64> {
        let theta = self
            .alpha
            .chunks(self.n_marks)
            .flat_map(|row| random::dirichlet(row, rng))
            .collect();
        FomcParams {
            n_zones: self.n_zones,
            n_marks: self.n_marks,
            theta,
        }
    }
}

/// Gamma(shape, rate) posterior of every Poisson cell rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsthpPosterior {
    pub n_zones: usize,
    pub n_marks: usize,
    pub shape: Vec<f64>,
    pub rate: Vec<f64>,
}

impl MsthpPosterior {
    pub fn mean(&self) -> MsthpParams<f64> {
        MsthpParams {
            n_zones: self.n_zones,
            n_marks: self.n_marks,
            rho: self.shape.iter().zip(&self.rate).map(|(s, r)| s / r).collect(),
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> MsthpParams<f64> {
        MsthpParams {
            n_zones: self.n_zones,
            n_marks: self.n_marks,
            rho: self
                .shape
                .iter()
                .zip(&self.rate)
                .map(|(&s, &r)| random::gamma(s, r, rng))
                .collect(),
        }
    }
}

pub fn conjugate_fit(block: ConjugateBlock, ds: &Dataset, priors: &Priors) -> Result<ConjugatePosterior> {
    priors.validate()?;
    Ok(match block {
        ConjugateBlock::Zone => {
            ConjugatePosterior::Zone(zone_posterior(&zone_transition_counts(ds), priors.zone_concentration)?)
        }
        ConjugateBlock::Fomc => ConjugatePosterior::Fomc(FomcPosterior {
            n_zones: ds.zones,
            n_marks: ds.n_marks(),
            alpha: fomc_counts(ds)
                .into_iter()
                .map(|c| c as f64 + priors.fomc_concentration)
                .collect(),
        }),
        ConjugateBlock::Msthp => {
            let c = msthp_counts(ds);
            ConjugatePosterior::Msthp(MsthpPosterior {
                n_zones: ds.zones,
                n_marks: ds.n_marks(),
                shape: c.q.iter().map(|&q| q as f64 + priors.msthp_shape).collect(),
                rate: vec![c.horizon + priors.msthp_rate; c.q.len()],
            })
        }
    })
}
