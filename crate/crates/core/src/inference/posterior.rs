//! Log posterior and its gradient in unconstrained coordinates.

use std::borrow::Cow;

use super::hmc::LogDensity;
use super::layout::ParamLayout;
use super::{MarkParams, ModelParams, ModelSpec};
use crate::error::{invalid, Error, Result};
use crate::event::Dataset;
use crate::marks::{fomc_counts, msthp_counts, softmax_backward, ExcitationModel, ExcitationParams, Family, MsthpCounts, PeriodTeams};
use crate::num::Real;
use crate::time_model::TimeStats;
use crate::zone_model::{zone_transition_counts, ZoneCounts};

/// Excitation terms acting on one modelled event of a screened model.
#[derive(Debug, Clone)]
struct MatrixEvent {
    zone: usize,
    mark: usize,
    /// `(Δt, rule row)` for every windowed predecessor with a retained row.
    terms: Vec<(f64, usize)>,
}

#[derive(Debug, Clone)]
enum MarkData {
    None,
    /// `(t, mark)` per period for full-history models.
    Stream(Vec<Vec<(f64, usize)>>),
    Matrix {
        events: Vec<MatrixEvent>,
        /// Event range and teams of each period.
        periods: Vec<(usize, usize, PeriodTeams)>,
    },
    Fomc(Vec<u64>),
    Msthp(MsthpCounts),
}

/// Dataset reduced to what the log-likelihood of one model needs.
#[derive(Debug, Clone)]
pub struct PreparedData {
    time: TimeStats,
    zone: ZoneCounts,
    marks: MarkData,
}

impl PreparedData {
    pub fn new(spec: &ModelSpec, model: Option<&ExcitationModel>, ds: &Dataset) -> Result<Self> {
        if ds.n_marks() != spec.n_marks() || ds.zones != spec.n_zones {
            return Err(invalid(format!(
                "dataset has {} marks and {} zones, model expects {} and {}",
                ds.n_marks(),
                ds.zones,
                spec.n_marks(),
                spec.n_zones
            )));
        }
        for p in &ds.periods {
            if p.events.windows(2).any(|w| !(w[1].t > w[0].t)) {
                return Err(Error::Domain(format!(
                    "game {} period {} has non-increasing event times",
                    p.game_id, p.period_id
                )));
            }
        }
        let marks = match (spec.family, model) {
            (Family::SBeta | Family::VBeta, _) => MarkData::Stream(
                ds.periods
                    .iter()
                    .map(|p| p.events.iter().map(|e| (e.t, e.mark.index())).collect())
                    .collect(),
            ),
            (Family::MBeta | Family::MBetaA, Some(em)) => {
                let idx = em.rule_index().expect("screened model");
                let w = em.window.unwrap_or(usize::MAX);
                let mut events = Vec::new();
                let mut periods = Vec::new();
                for p in &ds.periods {
                    let teams = if spec.family == Family::MBetaA {
                        let t = PeriodTeams::of(ds, p)?;
                        if t.home >= em.n_teams || t.away >= em.n_teams {
                            return Err(invalid("period team outside the model's team list"));
                        }
                        t
                    } else {
                        PeriodTeams { home: 0, away: 0 }
                    };
                    let start = events.len();
                    for i in 1..p.events.len() {
                        let e = &p.events[i];
                        let z = e.zone.index();
                        let terms = p.events[i.saturating_sub(w)..i]
                            .iter()
                            .filter_map(|h| idx.row_index(z, h.mark.index()).map(|r| (e.t - h.t, r)))
                            .collect();
                        events.push(MatrixEvent {
                            zone: z,
                            mark: e.mark.index(),
                            terms,
                        });
                    }
                    periods.push((start, events.len(), teams));
                }
                MarkData::Matrix { events, periods }
            }
            (Family::Fomc, _) if spec.baseline_fit == super::BlockFit::Sampled => MarkData::Fomc(fomc_counts(ds)),
            (Family::Msthp, _) if spec.baseline_fit == super::BlockFit::Sampled => {
                let c = msthp_counts(ds);
                if !(c.horizon > 0.0) {
                    return Err(invalid("Poisson baseline needs a positive observation horizon"));
                }
                MarkData::Msthp(c)
            }
            _ => MarkData::None,
        };
        Ok(PreparedData {
            time: TimeStats::from_dataset(ds),
            zone: zone_transition_counts(ds),
            marks,
        })
    }
}

/// Log-likelihood split by block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikBreakdown<F> {
    pub time: F,
    pub zone: F,
    pub marks: F,
}

impl<F: Real> LogLikBreakdown<F> {
    pub fn total(&self) -> F {
        self.time + self.zone + self.marks
    }
}

/// Log-likelihood of the blocks present in `p`, accumulating the gradient
/// into `grad` (same shape as `p`) when given.
pub(crate) fn log_likelihood<F: Real>(
    data: &PreparedData,
    model: Option<&ExcitationModel>,
    p: &ModelParams<F>,
    mut grad: Option<&mut ModelParams<F>>,
) -> Result<LogLikBreakdown<F>> {
    let mut out = LogLikBreakdown {
        time: F::zero(),
        zone: F::zero(),
        marks: F::zero(),
    };
    if let Some(tp) = &p.time {
        let g = grad.as_deref_mut().and_then(|g| g.time.as_mut());
        out.time = data.time.log_lik(tp, g.map(|g| (&mut g.shape[..], &mut g.rate[..])));
        check(out.time, "time")?;
    }
    if let Some(zp) = &p.zone {
        let g = grad.as_deref_mut().and_then(|g| g.zone.as_mut());
        out.zone = count_log_lik(&data.zone.counts, &zp.eta, g.map(|g| &mut g.eta[..]));
        check(out.zone, "zone")?;
    }
    match (&p.marks, &data.marks) {
        (None, _) => {}
        (Some(MarkParams::Excitation(e)), MarkData::Stream(periods)) => {
            let g = grad.as_deref_mut().and_then(|g| g.excitation_mut());
            out.marks = stream_log_lik(model.expect("excitation model"), e, periods, g);
        }
        (Some(MarkParams::Excitation(e)), MarkData::Matrix { events, periods }) => {
            let g = grad.as_deref_mut().and_then(|g| g.excitation_mut());
            out.marks = matrix_log_lik(model.expect("excitation model"), e, events, periods, g);
        }
        (Some(MarkParams::Fomc(f)), MarkData::Fomc(counts)) => {
            let g = grad.as_deref_mut().and_then(|g| match &mut g.marks {
                Some(MarkParams::Fomc(gf)) => Some(&mut gf.theta[..]),
                _ => None,
            });
            out.marks = count_log_lik(counts, &f.theta, g);
        }
        (Some(MarkParams::Msthp(q)), MarkData::Msthp(c)) => {
            out.marks = crate::marks::msthp_log_lik(&c.q, c.horizon, q)?;
            if let Some(Some(MarkParams::Msthp(gq))) = grad.as_deref_mut().map(|g| &mut g.marks) {
                let t = F::of(c.horizon);
                for ((g, &n), &r) in gq.rho.iter_mut().zip(&c.q).zip(&q.rho) {
                    *g += F::of(n as f64) / r - t;
                }
            }
        }
        _ => return Err(invalid("mark parameters do not match the prepared data")),
    }
    check(out.marks, "marks")?;
    Ok(out)
}

fn check<F: Real>(v: F, block: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { block: block.into() })
    }
}

/// `Σ n log p` over cells with positive counts.
fn count_log_lik<F: Real>(counts: &[u64], probs: &[F], grad: Option<&mut [F]>) -> F {
    let mut total = F::zero();
    for (&n, &q) in counts.iter().zip(probs) {
        if n > 0 {
            total += F::of(n as f64) * q.ln();
        }
    }
    if let Some(g) = grad {
        for ((g, &n), &q) in g.iter_mut().zip(counts).zip(probs) {
            if n > 0 {
                *g += F::of(n as f64) / q;
            }
        }
    }
    total
}

/// Full-history models via per-source decayed sums
/// `K_s = Σ e^{−β_s Δ}` and `L_s = Σ Δ e^{−β_s Δ}`.
fn stream_log_lik<F: Real>(
    model: &ExcitationModel,
    p: &ExcitationParams<F>,
    periods: &[Vec<(f64, usize)>],
    mut grad: Option<&mut ExcitationParams<F>>,
) -> F {
    let m = model.n_marks;
    let scalar = model.family == Family::SBeta;
    let beta = |s: usize| if scalar { p.decay[0] } else { p.decay[s] };
    let ea = p.alpha.exp();
    let mut k = vec![F::zero(); m];
    let mut l = vec![F::zero(); m];
    let mut total = F::zero();
    for events in periods {
        k.iter_mut().for_each(|v| *v = F::zero());
        l.iter_mut().for_each(|v| *v = F::zero());
        let mut prev_t = f64::NAN;
        for (i, &(t, mk)) in events.iter().enumerate() {
            if i > 0 {
                let dt = F::of(t - prev_t);
                let d_scalar = (-p.decay[0] * dt).exp();
                for s in 0..m {
                    if k[s] == F::zero() {
                        continue;
                    }
                    let d = if scalar { d_scalar } else { (-beta(s) * dt).exp() };
                    l[s] = (l[s] + dt * k[s]) * d;
                    k[s] *= d;
                }
                let mut s_num = F::zero();
                let mut s_den = F::zero();
                for s in 0..m {
                    s_num += k[s] * p.conversion[s * m + mk];
                    s_den += k[s];
                }
                let num = p.delta[mk] + ea * s_num;
                let den = F::one() + ea * s_den;
                total += num.ln() - den.ln();
                if let Some(g) = grad.as_deref_mut() {
                    let (inv_num, inv_den) = (F::one() / num, F::one() / den);
                    g.alpha += ea * s_num * inv_num - ea * s_den * inv_den;
                    g.delta[mk] += inv_num;
                    for s in 0..m {
                        if k[s] == F::zero() {
                            continue;
                        }
                        g.conversion[s * m + mk] += ea * k[s] * inv_num;
                        let gb = ea * l[s] * (inv_den - p.conversion[s * m + mk] * inv_num);
                        g.decay[if scalar { 0 } else { s }] += gb;
                    }
                }
            }
            k[mk] += F::one();
            prev_t = t;
        }
    }
    total
}

/// Screened models with explicit normalisation over marks.
fn matrix_log_lik<F: Real>(
    model: &ExcitationModel,
    p: &ExcitationParams<F>,
    events: &[MatrixEvent],
    periods: &[(usize, usize, PeriodTeams)],
    mut grad: Option<&mut ExcitationParams<F>>,
) -> F {
    let m = model.n_marks;
    let idx = model.rule_index().expect("screened model");
    let abil = model.family == Family::MBetaA;
    let mut total = F::zero();
    let mut scratch: Vec<(usize, F, F, F)> = Vec::new();
    let mut g_gamma = vec![F::zero(); if abil { idx.len() } else { 0 }];
    for &(start, end, teams) in periods {
        let gamma: Cow<[F]> = if abil {
            Cow::Owned(model.period_conversion(p, teams))
        } else {
            Cow::Borrowed(&p.conversion)
        };
        g_gamma.iter_mut().for_each(|v| *v = F::zero());
        for ev in &events[start..end] {
            let row = &p.delta[ev.zone * m..(ev.zone + 1) * m];
            let mut den: F = row.iter().copied().sum();
            let mut num = row[ev.mark];
            scratch.clear();
            for &(dt, r) in &ev.terms {
                let dt = F::of(dt);
                let rr = &idx.rows[r];
                for kk in rr.start..rr.end {
                    let e = (p.alpha - p.decay[kk] * dt).exp();
                    let v = e * gamma[kk];
                    den += v;
                    if idx.triples[kk].2 == ev.mark {
                        num += v;
                    }
                    scratch.push((kk, dt, e, v));
                }
            }
            total += num.ln() - den.ln();
            if let Some(g) = grad.as_deref_mut() {
                let (g_num, g_den) = (F::one() / num, -F::one() / den);
                for d in &mut g.delta[ev.zone * m..(ev.zone + 1) * m] {
                    *d += g_den;
                }
                g.delta[ev.zone * m + ev.mark] += g_num;
                for &(kk, dt, e, v) in &scratch {
                    let coef = if idx.triples[kk].2 == ev.mark { g_den + g_num } else { g_den };
                    g.alpha += coef * v;
                    g.decay[kk] -= coef * dt * v;
                    if abil {
                        g_gamma[kk] += coef * e;
                    } else {
                        g.conversion[kk] += coef * e;
                    }
                }
            }
        }
        if abil {
            if let Some(g) = grad.as_deref_mut() {
                for (r, rr) in idx.rows.iter().enumerate() {
                    let range = rr.start..rr.end;
                    if g_gamma[range.clone()].iter().all(|&v| v == F::zero()) {
                        continue;
                    }
                    let base = model.baseline[r] - rr.start;
                    let dl = softmax_backward(&gamma[range.clone()], &g_gamma[range.clone()], base);
                    for (j, kk) in range.enumerate() {
                        if j == base {
                            continue;
                        }
                        g.phi[kk] += dl[j];
                        let target = idx.triples[kk].2;
                        g.omega[model.team_for(target, teams) * m + target] += dl[j];
                    }
                }
            }
        }
    }
    total
}

/// Target density for the sampler: log posterior of one model on one
/// dataset, in unconstrained coordinates.
#[derive(Debug, Clone)]
pub struct Posterior {
    pub layout: ParamLayout,
    pub data: PreparedData,
}

impl Posterior {
    pub fn new(spec: &ModelSpec, ds: &Dataset) -> Result<Self> {
        let layout = ParamLayout::new(spec)?;
        let data = PreparedData::new(spec, layout.model.as_deref(), ds)?;
        Ok(Posterior { layout, data })
    }

    pub fn dim(&self) -> usize {
        self.layout.n_u
    }

    /// Log-likelihood blocks at the natural values `theta`.
    pub fn log_likelihood<F: Real>(&self, theta: &[F]) -> Result<LogLikBreakdown<F>> {
        let p = self.layout.assemble(theta);
        log_likelihood(&self.data, self.layout.model.as_deref(), &p, None)
    }

    pub fn log_posterior<F: Real>(&self, u: &[F]) -> Result<F> {
        self.evaluate(u, None)
    }

    pub fn log_posterior_grad<F: Real>(&self, u: &[F], grad: &mut [F]) -> Result<F> {
        self.evaluate(u, Some(grad))
    }

    fn evaluate<F: Real>(&self, u: &[F], grad: Option<&mut [F]>) -> Result<F> {
        if u.len() != self.layout.n_u {
            return Err(invalid(format!(
                "expected {} coordinates, got {}",
                self.layout.n_u,
                u.len()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                block: "coordinates".into(),
            });
        }
        let (theta, lj) = self.layout.constrain(u);
        check(lj, "jacobian")?;
        let p = self.layout.assemble(&theta);
        let model = self.layout.model.as_deref();
        match grad {
            None => {
                let ll = log_likelihood(&self.data, model, &p, None)?;
                let lp = self.layout.log_prior(&theta, None);
                check(lp, "prior")?;
                Ok(ll.total() + lp + lj)
            }
            Some(out) => {
                let mut gp = p.zeroed();
                let ll = log_likelihood(&self.data, model, &p, Some(&mut gp))?;
                let mut g_theta = self.layout.gather_grad(&gp);
                let lp = self.layout.log_prior(&theta, Some(&mut g_theta));
                check(lp, "prior")?;
                self.layout.backward(u, &theta, &g_theta, out);
                if let Some(i) = out.iter().position(|v| !v.is_finite()) {
                    let name = self.layout.blocks.iter().find(|b| {
                        (b.u_offset..b.u_offset + b.transform.free_dim(b.len)).contains(&i)
                    });
                    return Err(Error::NonFinite {
                        block: format!("gradient of {}", name.map_or("?", |b| b.name.as_str())),
                    });
                }
                Ok(ll.total() + lp + lj)
            }
        }
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        self.layout.n_u
    }

    fn log_density_grad(&self, u: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.log_posterior_grad(u, grad)
    }
}
