//! Out-of-sample log point-wise predictive density and model ranking.

use std::fmt::Write as _;

use crate::error::{invalid, Error, Result};
use crate::event::{Dataset, MarkId};
use crate::inference::{MarkParams, ModelParams, ModelSpec};
use crate::marks::{ExcitationModel, PeriodTeams};
use crate::num::log_mean_exp;
use crate::simulate::{Filtration, SimContext};
use crate::time_model::gamma_log_density;
use crate::zone_model::{zone_log_prob, ZoneState};

/// Contribution of one modelled test event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLpd {
    pub game_id: u64,
    pub period_id: u32,
    /// Position of the event within its period.
    pub index: usize,
    pub mark: MarkId,
    pub lpd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpdReport {
    pub model: String,
    pub abbreviation: String,
    pub total: f64,
    pub events: Vec<EventLpd>,
    pub d_par: usize,
    pub draws: usize,
    /// Fingerprint of the test set, used to refuse mixed comparisons.
    pub test_id: u64,
}

impl LpdReport {
    /// Events with zero likelihood under every draw.
    pub fn impossible(&self) -> Vec<&EventLpd> {
        self.events.iter().filter(|e| e.lpd == f64::NEG_INFINITY).collect()
    }

    pub fn events_csv(&self, spec: &ModelSpec) -> String {
        let mut s = String::from("game,period,index,mark,lpd\n");
        for e in &self.events {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.game_id,
                e.period_id,
                e.index,
                spec.taxonomy.label(e.mark),
                e.lpd
            );
        }
        s
    }
}

/// FNV-1a over the event content of a dataset.
pub fn dataset_fingerprint(ds: &Dataset) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    };
    for p in &ds.periods {
        eat(p.game_id);
        eat(p.period_id as u64);
        for e in &p.events {
            eat(e.t.to_bits());
            eat(e.zone.0 as u64);
            eat(e.mark.0 as u64);
        }
    }
    h
}

/// Log-likelihood of each modelled event of `ds` at one parameter draw,
/// in period order. Each period's history starts afresh.
pub fn event_log_likelihoods(
    spec: &ModelSpec,
    model: Option<&ExcitationModel>,
    ds: &Dataset,
    p: &ModelParams<f64>,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ds.n_modelled());
    for period in &ds.periods {
        if period.events.len() < 2 {
            continue;
        }
        let teams = if spec.family == crate::marks::Family::MBetaA {
            PeriodTeams::of(ds, period)?
        } else {
            PeriodTeams { home: 0, away: 0 }
        };
        let ctx = SimContext {
            spec,
            model,
            teams,
            home: period.home_team,
            away: period.away_team,
        };
        if let Some(MarkParams::Msthp(q)) = &p.marks {
            let total = q.total_rate();
            for w in period.events.windows(2) {
                let (z, m) = (w[1].zone.index(), w[1].mark.index());
                out.push(q.rate(z, m).ln() - total * (w[1].t - w[0].t));
            }
            continue;
        }
        let time = p.time.as_ref().ok_or_else(|| invalid("parameters lack the time block"))?;
        let zones = p.zone.as_ref().ok_or_else(|| invalid("parameters lack the zone block"))?;
        let mut filt = Filtration::new(&ctx, p, &period.events[..1])?;
        for w in period.events.windows(2) {
            let (prev, e) = (&w[0], &w[1]);
            let dt = e.t - prev.t;
            if !(dt > 0.0) {
                return Err(Error::Domain(format!(
                    "game {} period {}: non-increasing event times",
                    period.game_id, period.period_id
                )));
            }
            let k = prev.mark.index();
            let lt = gamma_log_density(dt, time.shape[k], time.rate[k]);
            let lz = zone_log_prob(
                ZoneState {
                    zone: prev.zone,
                    mark: prev.mark,
                },
                e.zone,
                zones,
            )?;
            let lm = filt.mark_log_prob(&ctx, p, e.t, e.zone.index(), e.mark.index())?;
            out.push(lt + lz + lm);
            filt.observe(&ctx, p, *e);
        }
    }
    Ok(out)
}

/// Log point-wise predictive density of `test` over posterior `draws`.
pub fn lpd(
    test: &Dataset,
    spec: &ModelSpec,
    draws: &[ModelParams<f64>],
    d_par: usize,
) -> Result<LpdReport> {
    if draws.is_empty() {
        return Err(invalid("lpd needs at least one posterior draw"));
    }
    let model = spec.excitation_model()?;
    let per_draw: Vec<Vec<f64>> = draws
        .iter()
        .map(|p| event_log_likelihoods(spec, model.as_ref(), test, p))
        .collect::<Result<_>>()?;
    let mut events = Vec::with_capacity(per_draw[0].len());
    let mut col = vec![0.0; draws.len()];
    let mut i = 0;
    for period in &test.periods {
        for (idx, e) in period.events.iter().enumerate().skip(1) {
            for (c, d) in col.iter_mut().zip(&per_draw) {
                *c = d[i];
            }
            events.push(EventLpd {
                game_id: period.game_id,
                period_id: period.period_id,
                index: idx,
                mark: e.mark,
                lpd: log_mean_exp(&col),
            });
            i += 1;
        }
    }
    let total = crate::num::pairwise_sum(&events.iter().map(|e| e.lpd).collect::<Vec<_>>());
    Ok(LpdReport {
        model: spec.family.description().to_string(),
        abbreviation: spec.family.abbreviation().to_string(),
        total,
        events,
        d_par,
        draws: draws.len(),
        test_id: dataset_fingerprint(test),
    })
}

/// Reports sorted by ascending lpd (best last); ties keep model-name order.
pub fn compare(reports: &[LpdReport]) -> Result<Vec<&LpdReport>> {
    if let Some(first) = reports.first() {
        if reports.iter().any(|r| r.test_id != first.test_id) {
            return Err(invalid("reports were computed on different test sets"));
        }
    }
    let mut out: Vec<&LpdReport> = reports.iter().collect();
    out.sort_by(|a, b| a.total.total_cmp(&b.total).then_with(|| a.model.cmp(&b.model)));
    Ok(out)
}

pub fn ranking_csv(ranked: &[&LpdReport]) -> String {
    let mut s = String::from("model,abbreviation,d_par,lpd\n");
    for r in ranked {
        let _ = writeln!(s, "{},{},{},{:.2}", r.model, r.abbreviation, r.d_par, r.total);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::fixtures::toy;
    use crate::event::Taxonomy;
    use crate::marks::{Family, FomcParams};
    use crate::time_model::TimeParams;
    use crate::zone_model::ZoneParams;

    fn ds() -> Dataset {
        let tx = Taxonomy::paired(&["Pass", "Shot"]);
        toy(tx, 3, &[(1, 1, vec![(0.0, 1, 1), (2.0, 2, 3), (2.5, 2, 4)])])
    }

    fn fomc(rate: f64) -> ModelParams<f64> {
        ModelParams {
            time: Some(TimeParams::uniform(4, 1.0, rate)),
            zone: Some(ZoneParams::uniform(3, 4)),
            marks: Some(MarkParams::Fomc(FomcParams::uniform(3, 4))),
        }
    }

    #[test]
    fn hand_computed_uniform_model() {
        let d = ds();
        let spec = ModelSpec::new(Family::Fomc, &d);
        let r = lpd(&d, &spec, &[fomc(1.0)], 7).unwrap();
        let e1 = -2.0 + (1.0f64 / 3.0).ln() + 0.25f64.ln();
        let e2 = -0.5 + (1.0f64 / 3.0).ln() + 0.25f64.ln();
        assert!((r.events[0].lpd - e1).abs() < 1e-12);
        assert!((r.events[1].lpd - e2).abs() < 1e-12);
        assert!((r.total - e1 - e2).abs() < 1e-12);
        assert_eq!(r.events[1].index, 2);
        assert!(r.impossible().is_empty());
    }

    #[test]
    fn averages_likelihoods_not_logs() {
        let d = ds();
        let spec = ModelSpec::new(Family::Fomc, &d);
        let r = lpd(&d, &spec, &[fomc(1.0), fomc(2.0)], 7).unwrap();
        let l = |b: f64, dt: f64| b * (-b * dt).exp() / 12.0;
        let want = ((l(1.0, 2.0) + l(2.0, 2.0)) / 2.0).ln();
        assert!((r.events[0].lpd - want).abs() < 1e-12);
    }

    #[test]
    fn ranking_is_ascending_and_refuses_mixed_test_sets() {
        let d = ds();
        let a = lpd(&d, &ModelSpec::new(Family::Fomc, &d), &[fomc(1.0)], 1).unwrap();
        let mut b = a.clone();
        b.model = "Other".into();
        b.total = a.total + 1.0;
        let both = [b.clone(), a.clone()];
        let ranked = compare(&both).unwrap();
        assert_eq!(ranked[0].total, a.total);
        let csv = ranking_csv(&ranked);
        assert!(csv.starts_with("model,abbreviation,d_par,lpd\n"));
        b.test_id ^= 1;
        assert!(compare(&[a, b]).is_err());
    }
}
