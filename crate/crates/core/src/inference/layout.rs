//! Correspondence between sampler coordinates and model parameters.
//!
//! Three vectors are involved: unconstrained coordinates `u` seen by the
//! sampler, natural values `θ` (one entry per free parameter value, e.g. a
//! whole simplex) and the assembled [`ModelParams`] with tied and pinned
//! entries filled in.

use std::sync::Arc;

use super::transform::Transform;
use super::{BlockFit, MarkParams, ModelParams, ModelSpec};
use crate::error::{invalid, Result};
use crate::event::MarkId;
use crate::marks::{ExcitationModel, ExcitationParams, Family, FomcParams, HomeAwayTying, MsthpParams};
use crate::num::Real;
use crate::time_model::TimeParams;
use crate::zone_model::ZoneParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prior {
    Exponential(f64),
    Normal(f64),
    /// Symmetric Dirichlet with the given concentration.
    Dirichlet(f64),
    /// Gamma(shape, rate).
    Gamma(f64, f64),
}

/// Where a block's values go in [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub enum Slot {
    TimeShape,
    TimeRate,
    /// Zone transition row of one (zone, mark) state.
    ZoneRow(usize),
    Alpha,
    /// Global background vector.
    Delta,
    /// Background vector of one zone.
    DeltaRow(usize),
    /// Free block of the tied background table.
    DeltaTied(usize),
    Decay,
    /// Conversion row: a source mark (Sβ/Vβ) or a rule row (Mβ).
    Conversion(usize),
    /// Rule logits at these triple indices.
    Phi(Vec<usize>),
    /// Ability logits at these `team * M + mark` positions.
    Omega(Vec<usize>),
    /// Markov-chain row of one (zone, previous mark).
    FomcRow(usize),
    Rho,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub slot: Slot,
    pub transform: Transform,
    pub prior: Prior,
    /// Natural values.
    pub len: usize,
    pub u_offset: usize,
    pub theta_offset: usize,
    pub labels: Vec<String>,
}

impl Block {
    fn u_range(&self) -> std::ops::Range<usize> {
        self.u_offset..self.u_offset + self.transform.free_dim(self.len)
    }

    fn theta_range(&self) -> std::ops::Range<usize> {
        self.theta_offset..self.theta_offset + self.len
    }
}

#[derive(Debug, Clone)]
pub struct ParamLayout {
    pub family: Family,
    pub n_marks: usize,
    pub n_zones: usize,
    pub n_teams: usize,
    pub blocks: Vec<Block>,
    pub n_u: usize,
    pub n_theta: usize,
    pub model: Option<Arc<ExcitationModel>>,
    pub tying: Option<HomeAwayTying>,
    has_time: bool,
    zone_sampled: bool,
    baseline_sampled: bool,
}

struct Builder {
    blocks: Vec<Block>,
    n_u: usize,
    n_theta: usize,
}

impl Builder {
    fn push(&mut self, name: &str, slot: Slot, transform: Transform, prior: Prior, labels: Vec<String>) {
        let len = labels.len();
        self.blocks.push(Block {
            name: name.to_string(),
            slot,
            transform,
            prior,
            len,
            u_offset: self.n_u,
            theta_offset: self.n_theta,
            labels,
        });
        self.n_u += transform.free_dim(len);
        self.n_theta += len;
    }
}

impl ParamLayout {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let (m, nz) = (spec.n_marks(), spec.n_zones);
        let pr = &spec.priors;
        let lab = |i: usize| spec.taxonomy.label(MarkId::from_index(i)).to_string();
        let mut b = Builder {
            blocks: Vec::new(),
            n_u: 0,
            n_theta: 0,
        };
        let has_time = spec.has_time_zone();
        let zone_sampled = has_time && spec.zone_fit == BlockFit::Sampled;
        let baseline_sampled = spec.baseline_fit == BlockFit::Sampled;
        if has_time {
            let names = |p: &str| (0..m).map(|i| format!("{p}[{}]", lab(i))).collect();
            b.push("a", Slot::TimeShape, Transform::Positive, Prior::Exponential(pr.time_shape_rate), names("a"));
            b.push("b", Slot::TimeRate, Transform::Positive, Prior::Exponential(pr.time_rate_rate), names("b"));
        }
        if zone_sampled {
            for z in 0..nz {
                for s in 0..m {
                    let labels = (0..nz)
                        .map(|to| format!("eta[{}@{}->{}]", lab(s), z + 1, to + 1))
                        .collect();
                    b.push(
                        "eta",
                        Slot::ZoneRow(z * m + s),
                        Transform::Simplex,
                        Prior::Dirichlet(pr.zone_concentration),
                        labels,
                    );
                }
            }
        }
        let model = spec.excitation_model()?.map(Arc::new);
        let mut tying = None;
        if let Some(em) = &model {
            b.push("alpha", Slot::Alpha, Transform::Real, Prior::Normal(pr.sigma_alpha), vec!["alpha".into()]);
            let zoned = |z: usize, i: usize| format!("delta[{}|{}]", lab(i), z + 1);
            if !em.family.is_matrix() {
                let labels = (0..m).map(|i| format!("delta[{}]", lab(i))).collect();
                b.push("delta", Slot::Delta, Transform::Simplex, Prior::Dirichlet(pr.background), labels);
            } else if spec.home_away_tying {
                let t = HomeAwayTying::new(&spec.taxonomy, nz)?;
                for (k, fb) in t.blocks().iter().enumerate() {
                    let labels = if fb.middle {
                        (0..fb.len)
                            .map(|i| format!("delta_pair[{}|{}]", lab(i), fb.zone + 1))
                            .collect()
                    } else {
                        (0..fb.len).map(|i| zoned(fb.zone, i)).collect()
                    };
                    b.push(
                        "delta",
                        Slot::DeltaTied(k),
                        Transform::Simplex,
                        Prior::Dirichlet(pr.zone_background),
                        labels,
                    );
                }
                tying = Some(t);
            } else {
                for z in 0..nz {
                    b.push(
                        "delta",
                        Slot::DeltaRow(z),
                        Transform::Simplex,
                        Prior::Dirichlet(pr.zone_background),
                        (0..m).map(|i| zoned(z, i)).collect(),
                    );
                }
            }
            let rule = |k: usize, p: &str| {
                let (z, s, t) = em.rule_index().expect("screened").triples[k];
                format!("{p}[{}->{}|{}]", lab(s), lab(t), z + 1)
            };
            let decay_labels: Vec<String> = match em.family {
                Family::SBeta => vec!["beta".into()],
                Family::VBeta => (0..m).map(|i| format!("beta[{}]", lab(i))).collect(),
                _ => (0..em.n_rules()).map(|k| rule(k, "beta")).collect(),
            };
            b.push("beta", Slot::Decay, Transform::Positive, Prior::Exponential(pr.decay_rate), decay_labels);
            match em.family {
                Family::SBeta | Family::VBeta => {
                    for s in 0..m {
                        let labels = (0..m).map(|t| format!("gamma[{}->{}]", lab(s), lab(t))).collect();
                        b.push(
                            "gamma",
                            Slot::Conversion(s),
                            Transform::Simplex,
                            Prior::Dirichlet(pr.conversion),
                            labels,
                        );
                    }
                }
                Family::MBeta => {
                    let idx = em.rule_index().expect("screened");
                    for (r, row) in idx.rows.iter().enumerate() {
                        let labels = (row.start..row.end).map(|k| rule(k, "gamma")).collect();
                        b.push(
                            "gamma",
                            Slot::Conversion(r),
                            Transform::Simplex,
                            Prior::Dirichlet(pr.conversion),
                            labels,
                        );
                    }
                }
                _ => {
                    let idx = em.rule_index().expect("screened");
                    let free: Vec<usize> = (0..idx.len()).filter(|k| !em.baseline.contains(k)).collect();
                    let labels = free.iter().map(|&k| rule(k, "phi")).collect();
                    b.push("phi", Slot::Phi(free.clone()), Transform::Real, Prior::Normal(pr.sigma_gamma), labels);
                    let mut targets: Vec<usize> = free.iter().map(|&k| idx.triples[k].2).collect();
                    targets.sort_unstable();
                    targets.dedup();
                    let mut pos = Vec::new();
                    let mut labels = Vec::new();
                    for c in (0..spec.n_teams).filter(|&c| c != spec.reference_team) {
                        for &t in &targets {
                            pos.push(c * m + t);
                            labels.push(format!("omega[team{}:{}]", c + 1, lab(t)));
                        }
                    }
                    b.push("omega", Slot::Omega(pos), Transform::Real, Prior::Normal(pr.sigma_gamma), labels);
                }
            }
        } else if baseline_sampled {
            match spec.family {
                Family::Fomc => {
                    for z in 0..nz {
                        for s in 0..m {
                            let labels = (0..m)
                                .map(|t| format!("theta[{}->{}|{}]", lab(s), lab(t), z + 1))
                                .collect();
                            b.push(
                                "theta",
                                Slot::FomcRow(z * m + s),
                                Transform::Simplex,
                                Prior::Dirichlet(pr.fomc_concentration),
                                labels,
                            );
                        }
                    }
                }
                _ => {
                    let labels = (0..nz)
                        .flat_map(|z| (0..m).map(move |i| (z, i)))
                        .map(|(z, i)| format!("rho[{}|{}]", lab(i), z + 1))
                        .collect();
                    b.push(
                        "rho",
                        Slot::Rho,
                        Transform::Positive,
                        Prior::Gamma(pr.msthp_shape, pr.msthp_rate),
                        labels,
                    );
                }
            }
        }
        Ok(ParamLayout {
            family: spec.family,
            n_marks: m,
            n_zones: nz,
            n_teams: spec.n_teams,
            blocks: b.blocks,
            n_u: b.n_u,
            n_theta: b.n_theta,
            model,
            tying,
            has_time,
            zone_sampled,
            baseline_sampled,
        })
    }

    pub fn theta_names(&self) -> Vec<String> {
        self.blocks.iter().flat_map(|b| b.labels.iter().cloned()).collect()
    }

    /// Number of free background probability values.
    pub fn n_background_values(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| matches!(b.slot, Slot::Delta | Slot::DeltaRow(_) | Slot::DeltaTied(_)))
            .map(|b| b.len)
            .sum()
    }

    /// Natural values and log-Jacobian from unconstrained coordinates.
    pub fn constrain<F: Real>(&self, u: &[F]) -> (Vec<F>, F) {
        let mut theta = vec![F::zero(); self.n_theta];
        let mut lj = F::zero();
        for b in &self.blocks {
            lj += b.transform.forward(&u[b.u_range()], &mut theta[b.theta_range()]);
        }
        (theta, lj)
    }

    pub fn unconstrain(&self, theta: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.n_u];
        for b in &self.blocks {
            b.transform.inverse(&theta[b.theta_range()], &mut u[b.u_range()]);
        }
        u
    }

    /// Gradient in `u` of `f(θ(u)) + logJ(u)` given `∂f/∂θ`.
    pub fn backward<F: Real>(&self, u: &[F], theta: &[F], g_theta: &[F], g_u: &mut [F]) {
        for b in &self.blocks {
            b.transform.backward(
                &u[b.u_range()],
                &theta[b.theta_range()],
                &g_theta[b.theta_range()],
                &mut g_u[b.u_range()],
            );
        }
    }

    pub fn log_prior<F: Real>(&self, theta: &[F], mut grad: Option<&mut [F]>) -> F {
        let mut total = F::zero();
        for b in &self.blocks {
            let x = &theta[b.theta_range()];
            let n = F::of_usize(b.len);
            match b.prior {
                Prior::Exponential(r) => {
                    let r = F::of(r);
                    total += n * r.ln() - r * x.iter().copied().sum::<F>();
                    if let Some(g) = grad.as_deref_mut() {
                        g[b.theta_range()].iter_mut().for_each(|v| *v -= r);
                    }
                }
                Prior::Normal(sd) => {
                    let sd = F::of(sd);
                    let c = -(sd * F::of((2.0 * std::f64::consts::PI).sqrt())).ln();
                    for &xi in x {
                        total += c - F::of(0.5) * (xi / sd) * (xi / sd);
                    }
                    if let Some(g) = grad.as_deref_mut() {
                        for (gi, &xi) in g[b.theta_range()].iter_mut().zip(x) {
                            *gi -= xi / (sd * sd);
                        }
                    }
                }
                Prior::Dirichlet(c) => {
                    let c = F::of(c);
                    total += (n * c).ln_gamma() - n * c.ln_gamma();
                    let cm1 = c - F::one();
                    if cm1 != F::zero() {
                        total += cm1 * x.iter().map(|v| v.ln()).sum::<F>();
                        if let Some(g) = grad.as_deref_mut() {
                            for (gi, &xi) in g[b.theta_range()].iter_mut().zip(x) {
                                *gi += cm1 / xi;
                            }
                        }
                    }
                }
                Prior::Gamma(s, r) => {
                    let (s, r) = (F::of(s), F::of(r));
                    for &xi in x {
                        total += s * r.ln() - s.ln_gamma() + (s - F::one()) * xi.ln() - r * xi;
                    }
                    if let Some(g) = grad.as_deref_mut() {
                        for (gi, &xi) in g[b.theta_range()].iter_mut().zip(x) {
                            *gi += (s - F::one()) / xi - r;
                        }
                    }
                }
            }
        }
        total
    }

    /// Empty parameter containers of the right shape for the sampled blocks.
    fn skeleton<F: Real>(&self) -> ModelParams<F> {
        let (m, nz) = (self.n_marks, self.n_zones);
        let time = self.has_time.then(|| TimeParams {
            shape: vec![F::zero(); m],
            rate: vec![F::zero(); m],
        });
        let zone = self.zone_sampled.then(|| ZoneParams {
            n_zones: nz,
            n_marks: m,
            eta: vec![F::zero(); nz * nz * m],
        });
        let marks = if let Some(em) = &self.model {
            let k = em.n_rules();
            let (nd, nb, nc) = match em.family {
                Family::SBeta => (m, 1, m * m),
                Family::VBeta => (m, m, m * m),
                Family::MBeta => (nz * m, k, k),
                _ => (nz * m, k, 0),
            };
            let abil = em.family == Family::MBetaA;
            Some(MarkParams::Excitation(ExcitationParams {
                alpha: F::zero(),
                delta: vec![F::zero(); nd],
                decay: vec![F::zero(); nb],
                conversion: vec![F::zero(); nc],
                phi: vec![F::zero(); if abil { k } else { 0 }],
                omega: vec![F::zero(); if abil { self.n_teams * m } else { 0 }],
            }))
        } else if self.baseline_sampled {
            match self.family {
                Family::Fomc => Some(MarkParams::Fomc(FomcParams {
                    n_zones: nz,
                    n_marks: m,
                    theta: vec![F::zero(); nz * m * m],
                })),
                _ => Some(MarkParams::Msthp(MsthpParams {
                    n_zones: nz,
                    n_marks: m,
                    rho: vec![F::zero(); nz * m],
                })),
            }
        } else {
            None
        };
        ModelParams { time, zone, marks }
    }

    fn rule_range(&self, row: usize) -> std::ops::Range<usize> {
        let idx = self.model.as_ref().and_then(|em| em.rule_index()).expect("screened");
        idx.rows[row].start..idx.rows[row].end
    }

    /// Assemble model parameters from natural values.
    pub fn assemble<F: Real>(&self, theta: &[F]) -> ModelParams<F> {
        let mut p = self.skeleton::<F>();
        let m = self.n_marks;
        let mut tied_free = Vec::new();
        for b in &self.blocks {
            let x = &theta[b.theta_range()];
            let ModelParams { time, zone, marks } = &mut p;
            match (&b.slot, marks.as_mut()) {
                (Slot::TimeShape, _) => time.as_mut().unwrap().shape.copy_from_slice(x),
                (Slot::TimeRate, _) => time.as_mut().unwrap().rate.copy_from_slice(x),
                (Slot::ZoneRow(s), _) => {
                    let nz = self.n_zones;
                    zone.as_mut().unwrap().eta[s * nz..(s + 1) * nz].copy_from_slice(x)
                }
                (Slot::Alpha, Some(MarkParams::Excitation(e))) => e.alpha = x[0],
                (Slot::Delta, Some(MarkParams::Excitation(e))) => e.delta.copy_from_slice(x),
                (Slot::DeltaRow(z), Some(MarkParams::Excitation(e))) => {
                    e.delta[z * m..(z + 1) * m].copy_from_slice(x)
                }
                (Slot::DeltaTied(_), _) => tied_free.extend_from_slice(x),
                (Slot::Decay, Some(MarkParams::Excitation(e))) => e.decay.copy_from_slice(x),
                (Slot::Conversion(r), Some(MarkParams::Excitation(e))) => {
                    if self.family.is_matrix() {
                        e.conversion[self.rule_range(*r)].copy_from_slice(x)
                    } else {
                        e.conversion[r * m..(r + 1) * m].copy_from_slice(x)
                    }
                }
                (Slot::Phi(ks), Some(MarkParams::Excitation(e))) => {
                    for (&k, &v) in ks.iter().zip(x) {
                        e.phi[k] = v;
                    }
                }
                (Slot::Omega(pos), Some(MarkParams::Excitation(e))) => {
                    for (&i, &v) in pos.iter().zip(x) {
                        e.omega[i] = v;
                    }
                }
                (Slot::FomcRow(r), Some(MarkParams::Fomc(f))) => {
                    f.theta[r * m..(r + 1) * m].copy_from_slice(x)
                }
                (Slot::Rho, Some(MarkParams::Msthp(q))) => q.rho.copy_from_slice(x),
                _ => unreachable!("block does not match the parameter skeleton"),
            }
        }
        if let (Some(t), Some(e)) = (&self.tying, p.excitation_mut()) {
            e.delta = t.expand(&tied_free);
        }
        p
    }

    /// Natural values read back from full parameters. Tied background
    /// tables are projected onto the constraint.
    pub fn flatten(&self, p: &ModelParams<f64>) -> Result<Vec<f64>> {
        self.collect(p, false)
    }

    /// Gradient in natural values from a gradient in full parameters.
    pub fn gather_grad<F: Real>(&self, g: &ModelParams<F>) -> Vec<F> {
        self.collect(g, true).expect("gradient has the layout's shape")
    }

    fn collect<F: Real>(&self, p: &ModelParams<F>, adjoint: bool) -> Result<Vec<F>> {
        let m = self.n_marks;
        let missing = || invalid("parameters lack a block required by the layout");
        let mut out = vec![F::zero(); self.n_theta];
        let tied = match (&self.tying, p.excitation()) {
            (Some(t), Some(e)) => {
                if adjoint {
                    t.reduce_grad(&e.delta)
                } else {
                    t.project(&e.delta)
                }
            }
            _ => Vec::new(),
        };
        let mut tied_at = 0;
        for b in &self.blocks {
            let dst = &mut out[b.theta_range()];
            match &b.slot {
                Slot::TimeShape => dst.copy_from_slice(&p.time.as_ref().ok_or_else(missing)?.shape),
                Slot::TimeRate => dst.copy_from_slice(&p.time.as_ref().ok_or_else(missing)?.rate),
                Slot::ZoneRow(s) => {
                    let nz = self.n_zones;
                    dst.copy_from_slice(&p.zone.as_ref().ok_or_else(missing)?.eta[s * nz..(s + 1) * nz])
                }
                Slot::FomcRow(r) => match &p.marks {
                    Some(MarkParams::Fomc(f)) => dst.copy_from_slice(&f.theta[r * m..(r + 1) * m]),
                    _ => return Err(missing()),
                },
                Slot::Rho => match &p.marks {
                    Some(MarkParams::Msthp(q)) => dst.copy_from_slice(&q.rho),
                    _ => return Err(missing()),
                },
                slot => {
                    let e = p.excitation().ok_or_else(missing)?;
                    match slot {
                        Slot::Alpha => dst[0] = e.alpha,
                        Slot::Delta => dst.copy_from_slice(&e.delta),
                        Slot::DeltaRow(z) => dst.copy_from_slice(&e.delta[z * m..(z + 1) * m]),
                        Slot::DeltaTied(_) => {
                            dst.copy_from_slice(&tied[tied_at..tied_at + b.len]);
                            tied_at += b.len;
                        }
                        Slot::Decay => dst.copy_from_slice(&e.decay),
                        Slot::Conversion(r) => {
                            if self.family.is_matrix() {
                                dst.copy_from_slice(&e.conversion[self.rule_range(*r)])
                            } else {
                                dst.copy_from_slice(&e.conversion[r * m..(r + 1) * m])
                            }
                        }
                        Slot::Phi(ks) => {
                            for (d, &k) in dst.iter_mut().zip(ks) {
                                *d = e.phi[k];
                            }
                        }
                        Slot::Omega(pos) => {
                            for (d, &i) in dst.iter_mut().zip(pos) {
                                *d = e.omega[i];
                            }
                        }
                        _ => unreachable!(),
                    }
                }
            }
        }
        Ok(out)
    }
}
