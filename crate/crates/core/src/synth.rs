//! Synthetic datasets drawn from a model, and random parameter values for
//! testing.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::event::{Dataset, Event, GamePeriod, MarkId, TeamId, ZoneId};
use crate::inference::{BlockFit, MarkParams, ModelParams, ModelSpec, ParamLayout};
use crate::marks::PeriodTeams;
use crate::random::{self, derive_rng, stream_id, SimRng};
use crate::simulate::{simulate_forward, Filtration, SimContext};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub games: usize,
    pub periods_per_game: usize,
    /// Length of each period in seconds.
    pub horizon: f64,
    pub seed: u64,
}

/// Teams `1..=n` named `Team 1`, `Team 2`, ….
pub fn synthetic_teams(n: usize) -> BTreeMap<TeamId, String> {
    (1..=n as u32).map(|i| (TeamId(i), format!("Team {i}"))).collect()
}

/// Home and away dense team indices of game `g` in a round robin.
fn pairing(g: usize, n_teams: usize) -> (usize, usize) {
    if n_teams < 2 {
        return (0, 0);
    }
    let home = g % n_teams;
    let offset = 1 + (g / n_teams) % (n_teams - 1);
    (home, (home + offset) % n_teams)
}

/// Simulate a dataset from `p`. Each period opens at `t = 0` with an event
/// in a uniformly drawn zone whose mark follows the background pmf.
pub fn simulate_dataset(spec: &ModelSpec, p: &ModelParams<f64>, cfg: &SynthConfig) -> Result<Dataset> {
    spec.validate()?;
    if spec.n_teams < 2 {
        return Err(invalid("synthetic games need at least two teams"));
    }
    let model = spec.excitation_model()?;
    let (m, nz) = (spec.n_marks(), spec.n_zones);
    let mut periods = Vec::new();
    for g in 0..cfg.games {
        let (h, a) = pairing(g, spec.n_teams);
        let teams = PeriodTeams { home: h, away: a };
        let ctx = SimContext {
            spec,
            model: model.as_ref(),
            teams,
            home: TeamId(h as u32 + 1),
            away: TeamId(a as u32 + 1),
        };
        for per in 0..cfg.periods_per_game {
            let mut rng = derive_rng(cfg.seed, stream_id(11, g as u64, per as u64));
            let (zone, mark) = match &p.marks {
                Some(MarkParams::Msthp(q)) => {
                    let c = random::categorical(&q.rho, &mut rng);
                    (c / m, c % m)
                }
                Some(MarkParams::Excitation(e)) => {
                    let z = rng.random_range(0..nz);
                    let row = model.as_ref().expect("excitation").delta_row(e, z);
                    (z, random::categorical(row, &mut rng))
                }
                _ => (rng.random_range(0..nz), rng.random_range(0..m)),
            };
            let first = Event {
                t: 0.0,
                zone: ZoneId::from_index(zone),
                mark: MarkId::from_index(mark),
                team: TeamId(0),
            };
            let first = Event {
                team: if spec.taxonomy.side(first.mark) == crate::event::Side::Home {
                    ctx.home
                } else {
                    ctx.away
                },
                ..first
            };
            let filt = Filtration::new(&ctx, p, &[first])?;
            let mut events = vec![first];
            events.extend(simulate_forward(&ctx, p, &filt, 0.0, cfg.horizon, &mut rng)?);
            periods.push(GamePeriod {
                game_id: g as u64 + 1,
                period_id: per as u32 + 1,
                home_team: ctx.home,
                away_team: ctx.away,
                events,
                t_end: cfg.horizon,
            });
        }
    }
    Ok(Dataset {
        taxonomy: spec.taxonomy.clone(),
        zones: nz,
        teams: synthetic_teams(spec.n_teams),
        periods,
    })
}

/// Parameter values with every block filled, drawn by mapping uniform
/// unconstrained coordinates on `[-radius, radius]`.
pub fn random_params(spec: &ModelSpec, radius: f64, rng: &mut SimRng) -> Result<ModelParams<f64>> {
    let mut full = spec.clone();
    full.zone_fit = BlockFit::Sampled;
    full.baseline_fit = BlockFit::Sampled;
    let layout = ParamLayout::new(&full)?;
    let u: Vec<f64> = (0..layout.n_u).map(|_| rng.random_range(-radius..=radius)).collect();
    let (theta, _) = layout.constrain(&u);
    Ok(layout.assemble(&theta))
}
