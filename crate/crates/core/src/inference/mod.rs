//! Posterior inference: parameter layout, log posterior with gradient,
//! Hamiltonian Monte Carlo, conjugate blocks and convergence summaries.

mod conjugate;
mod convergence;
mod fitted;
mod hmc;
mod layout;
mod posterior;
mod samples;
mod table;
pub mod transform;

pub use conjugate::{conjugate_fit, ConjugateBlock, ConjugatePosterior, FomcPosterior, MsthpPosterior};
pub use convergence::{ess, hpd_interval, rhat};
pub use fitted::FittedModel;
pub use hmc::{run_hmc, ChainStats, HmcConfig, HmcOutput, LogDensity};
pub use layout::{Block, ParamLayout, Prior, Slot};
pub use posterior::{LogLikBreakdown, Posterior, PreparedData};
pub use samples::{PosteriorSamples, SummaryRow};
pub use table::{params_from_table, params_to_table};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::event::{Dataset, Taxonomy};
use crate::marks::{ExcitationModel, ExcitationParams, Family, FomcParams, HomeAwayTying, MsthpParams};
use crate::num::Real;
use crate::screening::RuleSet;
use crate::time_model::TimeParams;
use crate::zone_model::ZoneParams;

/// Prior hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Priors {
    /// Rate `a′` of the exponential prior on inter-arrival shapes.
    pub time_shape_rate: f64,
    /// Rate `b′` of the exponential prior on inter-arrival rates.
    pub time_rate_rate: f64,
    /// Dirichlet concentration `ν` of zone transition rows.
    pub zone_concentration: f64,
    /// Dirichlet concentration `δ′` of a global background vector.
    pub background: f64,
    /// Dirichlet concentration `δ″` of zone-specific background vectors.
    pub zone_background: f64,
    /// Rate `β′` of the exponential prior on decay rates.
    pub decay_rate: f64,
    /// Dirichlet concentration `γ′` of conversion rows.
    pub conversion: f64,
    /// Prior standard deviation `σ_α` of the log excitation factor.
    pub sigma_alpha: f64,
    /// Prior standard deviation `σ_γ` of conversion and ability logits.
    pub sigma_gamma: f64,
    /// Dirichlet concentration of Markov-chain mark rows.
    pub fomc_concentration: f64,
    /// Gamma prior shape `s₀` of Poisson cell rates.
    pub msthp_shape: f64,
    /// Gamma prior rate `r₀` of Poisson cell rates.
    pub msthp_rate: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Priors {
            time_shape_rate: 0.01,
            time_rate_rate: 0.01,
            zone_concentration: 1.0,
            background: 1.0,
            zone_background: 1.0,
            decay_rate: 0.1,
            conversion: 1.0,
            sigma_alpha: 10.0,
            sigma_gamma: 10.0,
            fomc_concentration: 1.0,
            msthp_shape: 1.0,
            msthp_rate: 0.01,
        }
    }
}

impl Priors {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("time_shape_rate", self.time_shape_rate),
            ("time_rate_rate", self.time_rate_rate),
            ("zone_concentration", self.zone_concentration),
            ("background", self.background),
            ("zone_background", self.zone_background),
            ("decay_rate", self.decay_rate),
            ("conversion", self.conversion),
            ("sigma_alpha", self.sigma_alpha),
            ("sigma_gamma", self.sigma_gamma),
            ("fomc_concentration", self.fomc_concentration),
            ("msthp_shape", self.msthp_shape),
            ("msthp_rate", self.msthp_rate),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("prior hyper-parameter {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// How a block with a conjugate prior is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockFit {
    /// Closed-form posterior, drawn from directly.
    #[default]
    Closed,
    /// Sampled by HMC together with the other blocks.
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub taxonomy: Taxonomy,
    pub n_zones: usize,
    pub n_teams: usize,
    pub rules: Option<RuleSet>,
    /// Tie home and away background probabilities across mirrored zones.
    pub home_away_tying: bool,
    /// Dense index of the team whose abilities are pinned to zero.
    pub reference_team: usize,
    pub priors: Priors,
    /// Zone transition block.
    pub zone_fit: BlockFit,
    /// Markov-chain and Poisson mark blocks.
    pub baseline_fit: BlockFit,
}

impl ModelSpec {
    pub fn new(family: Family, ds: &Dataset) -> Self {
        ModelSpec {
            family,
            taxonomy: ds.taxonomy.clone(),
            n_zones: ds.zones,
            n_teams: ds.n_teams(),
            rules: None,
            home_away_tying: false,
            reference_team: 0,
            priors: Priors::default(),
            zone_fit: BlockFit::Closed,
            baseline_fit: BlockFit::Closed,
        }
    }

    pub fn with_rules(mut self, rules: RuleSet) -> Self {
        self.rules = Some(rules);
        self
    }

    pub fn with_tying(mut self, on: bool) -> Self {
        self.home_away_tying = on;
        self
    }

    pub fn n_marks(&self) -> usize {
        self.taxonomy.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        if self.n_zones == 0 {
            return Err(invalid("model needs at least one zone"));
        }
        match (self.family.is_matrix(), &self.rules) {
            (true, None) => {
                return Err(invalid(format!("{} needs screening rules", self.family.abbreviation())))
            }
            (false, Some(_)) => {
                return Err(invalid(format!(
                    "{} does not use screening rules",
                    self.family.abbreviation()
                )))
            }
            (true, Some(r)) if r.is_empty() => return Err(invalid("rule set is empty")),
            _ => {}
        }
        if self.home_away_tying {
            if !self.family.is_matrix() {
                return Err(invalid("home/away tying applies to zone-specific background only"));
            }
            HomeAwayTying::new(&self.taxonomy, self.n_zones)?;
        }
        if self.family == crate::marks::Family::MBetaA && self.reference_team >= self.n_teams {
            return Err(invalid("reference team index outside the team list"));
        }
        Ok(())
    }

    pub fn excitation_model(&self) -> Result<Option<ExcitationModel>> {
        match self.family {
            Family::SBeta | Family::VBeta => Ok(Some(ExcitationModel::full_history(
                self.family,
                &self.taxonomy,
                self.n_zones,
            )?)),
            Family::MBeta | Family::MBetaA => {
                let rules = self
                    .rules
                    .as_ref()
                    .ok_or_else(|| invalid("screened family without rules"))?;
                Ok(Some(ExcitationModel::screened(
                    self.family,
                    &self.taxonomy,
                    self.n_zones,
                    rules,
                    self.n_teams,
                    self.reference_team,
                )?))
            }
            _ => Ok(None),
        }
    }

    /// Whether the time and zone blocks belong to the model (all but MSTHP).
    pub fn has_time_zone(&self) -> bool {
        self.family != Family::Msthp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MarkParams<F> {
    Excitation(ExcitationParams<F>),
    Fomc(FomcParams<F>),
    Msthp(MsthpParams<F>),
}

/// Values of every block of a model. Blocks left to a closed-form posterior
/// are `None` in values assembled from sampler coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<F> {
    pub time: Option<TimeParams<F>>,
    pub zone: Option<ZoneParams<F>>,
    pub marks: Option<MarkParams<F>>,
}

fn zero<F: Real>(v: &[F]) -> Vec<F> {
    vec![F::zero(); v.len()]
}

impl<F: Real> ModelParams<F> {
    /// Same shape with every value zero, used to accumulate gradients.
    pub fn zeroed(&self) -> Self {
        ModelParams {
            time: self.time.as_ref().map(|t| TimeParams {
                shape: zero(&t.shape),
                rate: zero(&t.rate),
            }),
            zone: self.zone.as_ref().map(|z| ZoneParams {
                eta: zero(&z.eta),
                ..z.clone()
            }),
            marks: self.marks.as_ref().map(|m| match m {
                MarkParams::Excitation(p) => MarkParams::Excitation(ExcitationParams {
                    alpha: F::zero(),
                    delta: zero(&p.delta),
                    decay: zero(&p.decay),
                    conversion: zero(&p.conversion),
                    phi: zero(&p.phi),
                    omega: zero(&p.omega),
                }),
                MarkParams::Fomc(p) => MarkParams::Fomc(FomcParams {
                    theta: zero(&p.theta),
                    ..p.clone()
                }),
                MarkParams::Msthp(p) => MarkParams::Msthp(MsthpParams {
                    rho: zero(&p.rho),
                    ..p.clone()
                }),
            }),
        }
    }

    pub fn excitation(&self) -> Option<&ExcitationParams<F>> {
        match &self.marks {
            Some(MarkParams::Excitation(p)) => Some(p),
            _ => None,
        }
    }

    pub fn excitation_mut(&mut self) -> Option<&mut ExcitationParams<F>> {
        match &mut self.marks {
            Some(MarkParams::Excitation(p)) => Some(p),
            _ => None,
        }
    }
}
