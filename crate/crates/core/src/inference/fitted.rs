//! A fitted model: sampler draws plus closed-form posteriors of the
//! conjugate blocks, combined into full parameter draws on demand.

use super::conjugate::{conjugate_fit, ConjugateBlock, ConjugatePosterior, FomcPosterior, MsthpPosterior};
use super::hmc::{run_hmc, HmcConfig};
use super::layout::ParamLayout;
use super::posterior::Posterior;
use super::samples::PosteriorSamples;
use super::{BlockFit, MarkParams, ModelParams, ModelSpec};
use crate::error::{invalid, Result};
use crate::event::Dataset;
use crate::marks::Family;
use crate::random::{derive_rng, stream_id};
use crate::zone_model::ZonePosterior;

#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub layout: ParamLayout,
    pub samples: PosteriorSamples,
    pub zone: Option<ZonePosterior>,
    pub fomc: Option<FomcPosterior>,
    pub msthp: Option<MsthpPosterior>,
}

impl FittedModel {
    pub fn fit(spec: &ModelSpec, ds: &Dataset, cfg: &HmcConfig) -> Result<Self> {
        let post = Posterior::new(spec, ds)?;
        let out = run_hmc(&post, cfg)?;
        let samples = PosteriorSamples::from_hmc(&post.layout, out, cfg.warmup, cfg.seed);
        let conj = |b| conjugate_fit(b, ds, &spec.priors);
        let zone = match (spec.has_time_zone(), spec.zone_fit) {
            (true, BlockFit::Closed) => match conj(ConjugateBlock::Zone)? {
                ConjugatePosterior::Zone(z) => Some(z),
                _ => unreachable!(),
            },
            _ => None,
        };
        let (mut fomc, mut msthp) = (None, None);
        if spec.baseline_fit == BlockFit::Closed {
            match spec.family {
                Family::Fomc => {
                    if let ConjugatePosterior::Fomc(f) = conj(ConjugateBlock::Fomc)? {
                        fomc = Some(f);
                    }
                }
                Family::Msthp => {
                    if let ConjugatePosterior::Msthp(q) = conj(ConjugateBlock::Msthp)? {
                        msthp = Some(q);
                    }
                }
                _ => {}
            }
        }
        Ok(FittedModel {
            spec: spec.clone(),
            layout: post.layout,
            samples,
            zone,
            fomc,
            msthp,
        })
    }

    /// Reassemble a model from stored pieces, checking they agree.
    pub fn from_parts(
        spec: ModelSpec,
        samples: PosteriorSamples,
        zone: Option<ZonePosterior>,
        fomc: Option<FomcPosterior>,
        msthp: Option<MsthpPosterior>,
    ) -> Result<Self> {
        let layout = ParamLayout::new(&spec)?;
        if samples.names != layout.theta_names() {
            return Err(invalid("stored samples do not match the model's parameters"));
        }
        let closed = |fit| fit == BlockFit::Closed;
        if spec.has_time_zone() && closed(spec.zone_fit) && zone.is_none() {
            return Err(invalid("missing zone posterior"));
        }
        if spec.family == Family::Fomc && closed(spec.baseline_fit) && fomc.is_none() {
            return Err(invalid("missing Markov-chain posterior"));
        }
        if spec.family == Family::Msthp && closed(spec.baseline_fit) && msthp.is_none() {
            return Err(invalid("missing Poisson posterior"));
        }
        Ok(FittedModel {
            spec,
            layout,
            samples,
            zone,
            fomc,
            msthp,
        })
    }

    /// Free parameter count: sampler dimensions plus the free dimensions of
    /// the closed-form blocks.
    pub fn n_free_params(&self) -> usize {
        let mut d = self.layout.n_u;
        if let Some(z) = &self.zone {
            d += z.n_zones * z.n_marks * (z.n_zones - 1);
        }
        if let Some(f) = &self.fomc {
            d += f.n_zones * f.n_marks * (f.n_marks - 1);
        }
        if let Some(q) = &self.msthp {
            d += q.shape.len();
        }
        d
    }

    /// `r` complete parameter draws: sampler draws spread evenly over the
    /// chains, each paired with fresh draws of the closed-form blocks.
    pub fn draws(&self, r: usize, seed: u64) -> Result<Vec<ModelParams<f64>>> {
        if r == 0 {
            return Err(invalid("need at least one posterior draw"));
        }
        let n = self.samples.n_draws();
        if n == 0 && self.layout.n_theta > 0 {
            return Err(invalid("no posterior draws stored"));
        }
        Ok((0..r)
            .map(|k| {
                // a model without sampled blocks draws everything in closed form
                let theta = if n == 0 { &[][..] } else { self.samples.draw(k * n / r) };
                let mut p = self.layout.assemble(theta);
                let mut rng = derive_rng(seed, stream_id(7, k as u64, 0));
                if p.zone.is_none() {
                    p.zone = self.zone.as_ref().map(|z| z.draw(&mut rng));
                }
                if p.marks.is_none() {
                    p.marks = if let Some(f) = &self.fomc {
                        Some(MarkParams::Fomc(f.draw(&mut rng)))
                    } else {
                        self.msthp.as_ref().map(|q| MarkParams::Msthp(q.draw(&mut rng)))
                    };
                }
                p
            })
            .collect())
    }

    /// Posterior mean of the sampled blocks with the closed-form means.
    pub fn posterior_mean(&self) -> ModelParams<f64> {
        let n = self.samples.n_draws().max(1) as f64;
        let mut mean = vec![0.0; self.layout.n_theta];
        for d in self.samples.draws.iter().flatten() {
            for (m, v) in mean.iter_mut().zip(d) {
                *m += v / n;
            }
        }
        let mut p = self.layout.assemble(&mean);
        if p.zone.is_none() {
            p.zone = self.zone.as_ref().map(ZonePosterior::mean);
        }
        if p.marks.is_none() {
            p.marks = self
                .fomc
                .as_ref()
                .map(|f| MarkParams::Fomc(f.mean()))
                .or_else(|| self.msthp.as_ref().map(|q| MarkParams::Msthp(q.mean())));
        }
        p
    }
}
