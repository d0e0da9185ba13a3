use serde::{Deserialize, Serialize};

use super::{ability, ExcitationModel, Family, PeriodTeams};
use crate::error::{Error, Result};
use crate::event::{Event, GamePeriod};
use crate::num::Real;

/// Values of an excitation model's parameters.
///
/// Blocks are stored at full size: for MβA `phi` holds a zero at every
/// baseline rule and `omega` (teams × marks) a zero row for the reference
/// team. Which entries are free is decided by the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationParams<F> {
    /// Log excitation factor.
    pub alpha: F,
    /// Background mark probabilities: `M` values, or `Z × M` zone-major.
    pub delta: Vec<F>,
    /// Decay rates: one (Sβ), per source mark (Vβ) or per rule (Mβ/MβA).
    pub decay: Vec<F>,
    /// Conversion probabilities: `M × M` source-major (Sβ/Vβ), per rule (Mβ).
    pub conversion: Vec<F>,
    /// Baseline conversion logits per rule (MβA).
    pub phi: Vec<F>,
    /// Team ability logits, teams × marks (MβA).
    pub omega: Vec<F>,
}

/// One contribution of a past event to the current mark pmf.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Term<F> {
    /// Position of the exciting event in the history slice.
    pub pos: usize,
    pub target: usize,
    /// `exp(α - β Δt)`.
    pub kernel: F,
    /// `kernel × γ`.
    pub value: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weights<F> {
    /// Excitation mass routed to each mark.
    pub w: Vec<F>,
    /// Denominator excitation sum.
    pub total: F,
}

/// Log pmf of an observed mark. `impossible` flags zero mass (value `-inf`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkLogPmf<F> {
    pub value: F,
    pub impossible: bool,
}

impl ExcitationModel {
    /// Check the parameter block sizes and domains against the model.
    pub fn check<F: Real>(&self, p: &ExcitationParams<F>) -> Result<()> {
        let (m, z, k) = (self.n_marks, self.n_zones, self.n_rules());
        let (nd, nb, nc) = match self.family {
            Family::SBeta => (m, 1, m * m),
            Family::VBeta => (m, m, m * m),
            Family::MBeta => (z * m, k, k),
            Family::MBetaA => (z * m, k, 0),
            _ => return Err(Error::Domain("not an excitation family".into())),
        };
        if p.delta.len() != nd || p.decay.len() != nb || p.conversion.len() != nc {
            return Err(Error::Domain(format!(
                "{} parameter blocks have sizes delta={} decay={} conversion={}, expected {nd}/{nb}/{nc}",
                self.family.abbreviation(),
                p.delta.len(),
                p.decay.len(),
                p.conversion.len()
            )));
        }
        if self.family == Family::MBetaA && (p.phi.len() != k || p.omega.len() != self.n_teams * m) {
            return Err(Error::Domain("MβA logit blocks have the wrong size".into()));
        }
        if p.decay.iter().any(|&b| !(b > F::zero())) {
            return Err(Error::Domain("decay rates must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn delta_row<'a, F: Real>(&self, p: &'a ExcitationParams<F>, zone: usize) -> &'a [F] {
        if self.family.is_matrix() {
            &p.delta[zone * self.n_marks..(zone + 1) * self.n_marks]
        } else {
            &p.delta
        }
    }

    /// Conversion probabilities of one rule row, aligned with its triples.
    pub fn row_conversion<F: Real>(
        &self,
        p: &ExcitationParams<F>,
        row: usize,
        teams: PeriodTeams,
    ) -> Vec<F> {
        let idx = self.rule_index().expect("screened model");
        let r = &idx.rows[row];
        match self.family {
            Family::MBeta => p.conversion[r.start..r.end].to_vec(),
            _ => {
                let (phi, omega) = self.row_logit_inputs(p, row, teams);
                conversion_unchecked(&phi, &omega, self.baseline[row] - r.start)
            }
        }
    }

    pub(crate) fn row_logit_inputs<F: Real>(
        &self,
        p: &ExcitationParams<F>,
        row: usize,
        teams: PeriodTeams,
    ) -> (Vec<F>, Vec<F>) {
        let idx = self.rule_index().expect("screened model");
        let r = &idx.rows[row];
        let phi = p.phi[r.start..r.end].to_vec();
        let omega = (r.start..r.end)
            .map(|k| {
                let target = idx.triples[k].2;
                p.omega[self.team_for(target, teams) * self.n_marks + target]
            })
            .collect();
        (phi, omega)
    }

    /// Rule conversion probabilities for one period's pair of teams.
    pub fn period_conversion<F: Real>(&self, p: &ExcitationParams<F>, teams: PeriodTeams) -> Vec<F> {
        match self.family {
            Family::MBeta => p.conversion.clone(),
            Family::MBetaA => {
                let idx = self.rule_index().expect("screened model");
                let mut out = vec![F::zero(); idx.len()];
                for (row, r) in idx.rows.iter().enumerate() {
                    out[r.start..r.end].copy_from_slice(&self.row_conversion(p, row, teams));
                }
                out
            }
            _ => p.conversion.clone(),
        }
    }

    /// All excitation terms acting on an event at (`t`, `zone`).
    pub fn terms<F: Real>(
        &self,
        p: &ExcitationParams<F>,
        history: &[Event],
        t: f64,
        zone: usize,
        teams: PeriodTeams,
    ) -> Result<Vec<Term<F>>> {
        if let Some(last) = history.last() {
            if !(t > last.t) {
                return Err(Error::Domain(format!(
                    "event time {t} is not after the last history time {}",
                    last.t
                )));
            }
        }
        let m = self.n_marks;
        let mut out = Vec::new();
        match self.family {
            Family::SBeta | Family::VBeta => {
                for (pos, e) in history.iter().enumerate() {
                    let s = e.mark.index();
                    let beta = if self.family == Family::SBeta { p.decay[0] } else { p.decay[s] };
                    let kernel = (p.alpha - beta * F::of(t - e.t)).exp();
                    for target in 0..m {
                        out.push(Term {
                            pos,
                            target,
                            kernel,
                            value: kernel * p.conversion[s * m + target],
                        });
                    }
                }
            }
            Family::MBeta | Family::MBetaA => {
                let idx = self.rule_index().expect("screened model");
                let w = self.window.unwrap_or(usize::MAX);
                let start = history.len().saturating_sub(w);
                for (pos, e) in history.iter().enumerate().skip(start) {
                    let s = e.mark.index();
                    let Some(row) = idx.row_index(zone, s) else { continue };
                    let r = &idx.rows[row];
                    let gamma = self.row_conversion(p, row, teams);
                    for (g, k) in gamma.iter().zip(r.start..r.end) {
                        let kernel = (p.alpha - p.decay[k] * F::of(t - e.t)).exp();
                        out.push(Term {
                            pos,
                            target: idx.triples[k].2,
                            kernel,
                            value: kernel * *g,
                        });
                    }
                }
            }
            _ => return Err(Error::Domain("not an excitation family".into())),
        }
        Ok(out)
    }
}

fn conversion_unchecked<F: Real>(phi: &[F], omega: &[F], baseline: usize) -> Vec<F> {
    ability::softmax_with_baseline(phi, omega, baseline)
}

/// Excitation mass per mark and the denominator sum for an event at
/// (`t`, `zone`) following `history`.
pub fn excitation_weights<F: Real>(
    model: &ExcitationModel,
    p: &ExcitationParams<F>,
    history: &[Event],
    t: f64,
    zone: usize,
    teams: PeriodTeams,
) -> Result<Weights<F>> {
    let terms = model.terms(p, history, t, zone, teams)?;
    let mut w = vec![F::zero(); model.n_marks];
    for term in &terms {
        w[term.target] += term.value;
    }
    let total = if model.family.is_matrix() {
        terms.iter().map(|t| t.value).sum()
    } else {
        // One kernel per past event; conversion rows sum to one.
        let mut seen = usize::MAX;
        let mut s = F::zero();
        for term in &terms {
            if term.pos != seen {
                seen = term.pos;
                s += term.kernel;
            }
        }
        s
    };
    Ok(Weights { w, total })
}

/// Full pmf over marks for an event at (`t`, `zone`).
pub fn mark_pmf<F: Real>(
    model: &ExcitationModel,
    p: &ExcitationParams<F>,
    history: &[Event],
    t: f64,
    zone: usize,
    teams: PeriodTeams,
) -> Result<Vec<F>> {
    let wt = excitation_weights(model, p, history, t, zone, teams)?;
    let delta = model.delta_row(p, zone);
    let num: Vec<F> = delta.iter().zip(&wt.w).map(|(&d, &w)| d + w).collect();
    let den = if model.family.is_matrix() {
        num.iter().copied().sum()
    } else {
        F::one() + wt.total
    };
    Ok(num.into_iter().map(|x| x / den).collect())
}

pub fn mark_log_pmf<F: Real>(
    model: &ExcitationModel,
    p: &ExcitationParams<F>,
    event: &Event,
    history: &[Event],
    teams: PeriodTeams,
) -> Result<MarkLogPmf<F>> {
    let pmf = mark_pmf(model, p, history, event.t, event.zone.index(), teams)?;
    let q = pmf[event.mark.index()];
    Ok(MarkLogPmf {
        value: q.ln(),
        impossible: !(q > F::zero()),
    })
}

/// Probabilities that event `i` of `period` is an immigrant (entry 0) or
/// the offspring of event `j < i` (entry `j + 1`).
pub fn branching_probabilities<F: Real>(
    model: &ExcitationModel,
    p: &ExcitationParams<F>,
    period: &GamePeriod,
    i: usize,
    teams: PeriodTeams,
) -> Result<Vec<F>> {
    if i == 0 || i >= period.events.len() {
        return Err(Error::InvalidArgument(format!(
            "event {i} is not a modelled event of the period"
        )));
    }
    let ev = &period.events[i];
    let history = &period.events[..i];
    let target = ev.mark.index();
    let terms = model.terms(p, history, ev.t, ev.zone.index(), teams)?;
    let mut out = vec![F::zero(); i + 1];
    out[0] = model.delta_row(p, ev.zone.index())[target];
    for term in terms.iter().filter(|t| t.target == target) {
        out[term.pos + 1] += term.value;
    }
    let total: F = out.iter().copied().sum();
    if total > F::zero() {
        out.iter_mut().for_each(|x| *x /= total);
    } else {
        out.iter_mut().for_each(|x| *x = F::zero());
        out[0] = F::one();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{MarkId, Taxonomy, TeamId, ZoneId};
    use crate::screening::{NScope, Rule, RuleSet};
    use approx::assert_relative_eq;

    const TEAMS: PeriodTeams = PeriodTeams { home: 0, away: 1 };

    fn ev(t: f64, z: u8, m: u16) -> Event {
        Event {
            t,
            zone: ZoneId(z),
            mark: MarkId(m),
            team: TeamId(1),
        }
    }

    fn sbeta2() -> (ExcitationModel, ExcitationParams<f64>) {
        let tx = Taxonomy::paired(&["A"]);
        let model = ExcitationModel::full_history(Family::SBeta, &tx, 1).unwrap();
        let p = ExcitationParams {
            alpha: 0.0,
            delta: vec![0.5, 0.5],
            decay: vec![2f64.ln()],
            conversion: vec![1.0, 0.0, 0.5, 0.5],
            phi: vec![],
            omega: vec![],
        };
        (model, p)
    }

    #[test]
    fn single_event_hand_evaluation() {
        let (model, p) = sbeta2();
        let h = [ev(0.0, 1, 1)];
        let w = excitation_weights(&model, &p, &h, 1.0, 0, TEAMS).unwrap();
        assert_relative_eq!(w.w[0], 0.5, epsilon = 1e-15);
        assert_eq!(w.w[1], 0.0);
        assert_relative_eq!(w.total, 0.5, epsilon = 1e-15);
        let pmf = mark_pmf(&model, &p, &h, 1.0, 0, TEAMS).unwrap();
        assert_relative_eq!(pmf[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(pmf[1], 1.0 / 3.0, epsilon = 1e-15);
        let lp = mark_log_pmf(&model, &p, &ev(1.0, 1, 1), &h, TEAMS).unwrap();
        assert_relative_eq!(lp.value, (2.0f64 / 3.0).ln(), epsilon = 1e-15);
    }

    #[test]
    fn weights_add_over_events_and_reject_ties() {
        let (model, p) = sbeta2();
        let a = excitation_weights(&model, &p, &[ev(0.0, 1, 1)], 3.0, 0, TEAMS).unwrap();
        let b = excitation_weights(&model, &p, &[ev(1.5, 1, 2)], 3.0, 0, TEAMS).unwrap();
        let ab = excitation_weights(&model, &p, &[ev(0.0, 1, 1), ev(1.5, 1, 2)], 3.0, 0, TEAMS)
            .unwrap();
        for m in 0..2 {
            assert_relative_eq!(ab.w[m], a.w[m] + b.w[m], epsilon = 1e-15);
        }
        let empty = excitation_weights(&model, &p, &[], 3.0, 0, TEAMS).unwrap();
        assert_eq!((empty.w, empty.total), (vec![0.0, 0.0], 0.0));
        assert!(excitation_weights(&model, &p, &[ev(3.0, 1, 1)], 3.0, 0, TEAMS).is_err());
    }

    #[test]
    fn zero_mass_is_flagged() {
        let (model, mut p) = sbeta2();
        p.delta = vec![1.0, 0.0];
        let lp = mark_log_pmf(&model, &p, &ev(1.0, 1, 2), &[], TEAMS).unwrap();
        assert!(lp.impossible);
        assert_eq!(lp.value, f64::NEG_INFINITY);
    }

    fn rules(triples: &[(u8, u16, u16)], n_marks: usize, window: usize) -> RuleSet {
        RuleSet {
            window,
            n: triples.len(),
            scope: NScope::Global,
            n_marks,
            n_zones: 1,
            mark_totals: vec![1; n_marks],
            rules: triples
                .iter()
                .map(|&(z, s, t)| Rule {
                    zone: ZoneId(z),
                    source: MarkId(s),
                    target: MarkId(t),
                    support: 1,
                    lift: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn branching_direct_ratio() {
        let tx = Taxonomy::paired(&["A"]);
        let rs = rules(&[(1, 1, 1)], 2, 5);
        let model = ExcitationModel::screened(Family::MBeta, &tx, 1, &rs, 2, 0).unwrap();
        let p = ExcitationParams {
            alpha: 0.5f64.ln(),
            delta: vec![0.5, 0.5],
            decay: vec![1e-12],
            conversion: vec![1.0],
            phi: vec![],
            omega: vec![],
        };
        let period = GamePeriod {
            game_id: 1,
            period_id: 1,
            home_team: TeamId(1),
            away_team: TeamId(2),
            events: vec![ev(0.0, 1, 1), ev(1.0, 1, 1)],
            t_end: 1.0,
        };
        let b = branching_probabilities(&model, &p, &period, 1, TEAMS).unwrap();
        assert_relative_eq!(b[0], 0.5, epsilon = 1e-10);
        assert_relative_eq!(b[1], 0.5, epsilon = 1e-10);
        assert!(branching_probabilities(&model, &p, &period, 0, TEAMS).is_err());
    }

    #[test]
    fn matrix_window_drops_old_events() {
        let tx = Taxonomy::paired(&["A", "B"]);
        let rs = rules(&[(1, 1, 2), (1, 1, 3)], 4, 1);
        let model = ExcitationModel::screened(Family::MBeta, &tx, 1, &rs, 2, 0).unwrap();
        let p = ExcitationParams {
            alpha: 0.0,
            delta: vec![0.25; 4],
            decay: vec![0.1, 0.2],
            conversion: vec![0.3, 0.7],
            phi: vec![],
            omega: vec![],
        };
        // the older mark-1 event falls outside the window behind a mark-4 event
        let h = [ev(0.0, 1, 1), ev(1.0, 1, 4)];
        let pmf = mark_pmf(&model, &p, &h, 2.0, 0, TEAMS).unwrap();
        assert!(pmf.iter().all(|&x| (x - 0.25f64).abs() < 1e-15));
        let h = [ev(0.0, 1, 4), ev(1.0, 1, 1)];
        let pmf = mark_pmf(&model, &p, &h, 2.0, 0, TEAMS).unwrap();
        let a = 0.3 * (-0.1f64).exp();
        let b = 0.7 * (-0.2f64).exp();
        let d = 1.0 + a + b;
        assert_relative_eq!(pmf[1], (0.25 + a) / d, epsilon = 1e-15);
        assert_relative_eq!(pmf[2], (0.25 + b) / d, epsilon = 1e-15);
        assert_relative_eq!(pmf.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
    }
}
