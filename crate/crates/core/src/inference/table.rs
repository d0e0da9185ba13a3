//! Named parameter tables: `param,index1,index2,index3,value` with 1-based
//! indices (zone, mark and team as applicable) and blanks where unused.

use std::fmt::Write as _;

use super::{MarkParams, ModelParams, ModelSpec};
use crate::error::{Error, Result};
use crate::marks::{ExcitationParams, Family, FomcParams, MsthpParams};
use crate::time_model::TimeParams;
use crate::zone_model::ZoneParams;

pub fn params_to_table(spec: &ModelSpec, p: &ModelParams<f64>) -> Result<String> {
    let m = spec.n_marks();
    let nz = spec.n_zones;
    let mut s = String::from("param,index1,index2,index3,value\n");
    let mut row = |name: &str, idx: &[usize], v: f64| {
        let mut cols = [String::new(), String::new(), String::new()];
        for (c, i) in cols.iter_mut().zip(idx) {
            *c = (i + 1).to_string();
        }
        let _ = writeln!(s, "{name},{},{},{},{v}", cols[0], cols[1], cols[2]);
    };
    if let Some(t) = &p.time {
        for i in 0..m {
            row("a", &[i], t.shape[i]);
        }
        for i in 0..m {
            row("b", &[i], t.rate[i]);
        }
    }
    if let Some(z) = &p.zone {
        for from in 0..nz {
            for prev in 0..m {
                for to in 0..nz {
                    row("eta", &[from, prev, to], z.eta[(from * m + prev) * nz + to]);
                }
            }
        }
    }
    match &p.marks {
        Some(MarkParams::Excitation(e)) => {
            let em = spec.excitation_model()?.expect("excitation family");
            em.check(e)?;
            row("alpha", &[], e.alpha);
            if em.family.is_matrix() {
                for z in 0..nz {
                    for i in 0..m {
                        row("delta", &[z, i], e.delta[z * m + i]);
                    }
                }
                let idx = em.rule_index().expect("screened");
                for (k, &(z, src, tgt)) in idx.triples.iter().enumerate() {
                    row("beta", &[z, src, tgt], e.decay[k]);
                }
                for (k, &(z, src, tgt)) in idx.triples.iter().enumerate() {
                    if em.family == Family::MBeta {
                        row("gamma", &[z, src, tgt], e.conversion[k]);
                    } else {
                        row("phi", &[z, src, tgt], e.phi[k]);
                    }
                }
                if em.family == Family::MBetaA {
                    for c in 0..spec.n_teams {
                        for i in 0..m {
                            row("omega", &[c, i], e.omega[c * m + i]);
                        }
                    }
                }
            } else {
                for i in 0..m {
                    row("delta", &[i], e.delta[i]);
                }
                if em.family == Family::SBeta {
                    row("beta", &[], e.decay[0]);
                } else {
                    for i in 0..m {
                        row("beta", &[i], e.decay[i]);
                    }
                }
                for src in 0..m {
                    for tgt in 0..m {
                        row("gamma", &[src, tgt], e.conversion[src * m + tgt]);
                    }
                }
            }
        }
        Some(MarkParams::Fomc(f)) => {
            for z in 0..nz {
                for prev in 0..m {
                    for i in 0..m {
                        row("theta", &[z, prev, i], f.theta[(z * m + prev) * m + i]);
                    }
                }
            }
        }
        Some(MarkParams::Msthp(q)) => {
            for z in 0..nz {
                for i in 0..m {
                    row("rho", &[z, i], q.rho[z * m + i]);
                }
            }
        }
        None => {}
    }
    Ok(s)
}

pub fn params_from_table(spec: &ModelSpec, text: &str) -> Result<ModelParams<f64>> {
    spec.validate()?;
    let m = spec.n_marks();
    let nz = spec.n_zones;
    let em = spec.excitation_model()?;
    let k = em.as_ref().map_or(0, |e| e.n_rules());
    let mut time: Option<TimeParams<f64>> = None;
    let mut zone: Option<ZoneParams<f64>> = None;
    let mut exc: Option<ExcitationParams<f64>> = None;
    let mut fomc: Option<FomcParams<f64>> = None;
    let mut msthp: Option<MsthpParams<f64>> = None;
    let new_exc = || {
        let (nd, nb, nc) = match spec.family {
            Family::SBeta => (m, 1, m * m),
            Family::VBeta => (m, m, m * m),
            Family::MBeta => (nz * m, k, k),
            _ => (nz * m, k, 0),
        };
        let abil = spec.family == Family::MBetaA;
        ExcitationParams {
            alpha: f64::NAN,
            delta: vec![f64::NAN; nd],
            decay: vec![f64::NAN; nb],
            conversion: vec![f64::NAN; nc],
            phi: vec![if abil { f64::NAN } else { 0.0 }; if abil { k } else { 0 }],
            omega: vec![0.0; if abil { spec.n_teams * m } else { 0 }],
        }
    };
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("param,") {
            continue;
        }
        let err = |msg: String| Error::Parse { line: ln + 1, msg };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(err("expected 5 fields".into()));
        }
        let mut idx = Vec::new();
        for c in &f[1..4] {
            if c.is_empty() {
                break;
            }
            let i: usize = c.parse().map_err(|_| err(format!("bad index `{c}`")))?;
            if i == 0 {
                return Err(err("indices are 1-based".into()));
            }
            idx.push(i - 1);
        }
        let v: f64 = f[4].parse().map_err(|_| err(format!("bad value `{}`", f[4])))?;
        let bad = || err(format!("parameter `{}` with indices {:?} does not fit the model", f[0], &f[1..4]));
        let check = |ok: bool| if ok { Ok(()) } else { Err(bad()) };
        let triple = |idx: &[usize]| -> Result<usize> {
            let ri = em.as_ref().and_then(|e| e.rule_index()).ok_or_else(bad)?;
            check(idx.len() == 3)?;
            ri.triples.binary_search(&(idx[0], idx[1], idx[2])).map_err(|_| bad())
        };
        let matrix = spec.family.is_matrix();
        match f[0] {
            "a" | "b" => {
                check(spec.has_time_zone() && idx.len() == 1 && idx[0] < m)?;
                let t = time.get_or_insert_with(|| TimeParams {
                    shape: vec![f64::NAN; m],
                    rate: vec![f64::NAN; m],
                });
                if f[0] == "a" {
                    t.shape[idx[0]] = v
                } else {
                    t.rate[idx[0]] = v
                }
            }
            "eta" => {
                check(idx.len() == 3 && idx[0] < nz && idx[1] < m && idx[2] < nz)?;
                let z = zone.get_or_insert_with(|| ZoneParams {
                    n_zones: nz,
                    n_marks: m,
                    eta: vec![f64::NAN; nz * nz * m],
                });
                z.eta[(idx[0] * m + idx[1]) * nz + idx[2]] = v;
            }
            "alpha" => {
                check(em.is_some() && idx.is_empty())?;
                exc.get_or_insert_with(new_exc).alpha = v;
            }
            "delta" => {
                check(em.is_some())?;
                let e = exc.get_or_insert_with(new_exc);
                if matrix {
                    check(idx.len() == 2 && idx[0] < nz && idx[1] < m)?;
                    e.delta[idx[0] * m + idx[1]] = v;
                } else {
                    check(idx.len() == 1 && idx[0] < m)?;
                    e.delta[idx[0]] = v;
                }
            }
            "beta" => {
                check(em.is_some())?;
                let j = match spec.family {
                    Family::SBeta => {
                        check(idx.is_empty())?;
                        0
                    }
                    Family::VBeta => {
                        check(idx.len() == 1 && idx[0] < m)?;
                        idx[0]
                    }
                    _ => triple(&idx)?,
                };
                exc.get_or_insert_with(new_exc).decay[j] = v;
            }
            "gamma" => {
                check(em.is_some() && spec.family != Family::MBetaA)?;
                let j = if matrix {
                    triple(&idx)?
                } else {
                    check(idx.len() == 2 && idx[0] < m && idx[1] < m)?;
                    idx[0] * m + idx[1]
                };
                exc.get_or_insert_with(new_exc).conversion[j] = v;
            }
            "phi" => {
                check(spec.family == Family::MBetaA)?;
                let j = triple(&idx)?;
                exc.get_or_insert_with(new_exc).phi[j] = v;
            }
            "omega" => {
                check(spec.family == Family::MBetaA && idx.len() == 2 && idx[0] < spec.n_teams && idx[1] < m)?;
                exc.get_or_insert_with(new_exc).omega[idx[0] * m + idx[1]] = v;
            }
            "theta" => {
                check(spec.family == Family::Fomc && idx.len() == 3 && idx[0] < nz && idx[1] < m && idx[2] < m)?;
                let p = fomc.get_or_insert_with(|| FomcParams {
                    n_zones: nz,
                    n_marks: m,
                    theta: vec![f64::NAN; nz * m * m],
                });
                p.theta[(idx[0] * m + idx[1]) * m + idx[2]] = v;
            }
            "rho" => {
                check(spec.family == Family::Msthp && idx.len() == 2 && idx[0] < nz && idx[1] < m)?;
                let p = msthp.get_or_insert_with(|| MsthpParams {
                    n_zones: nz,
                    n_marks: m,
                    rho: vec![f64::NAN; nz * m],
                });
                p.rho[idx[0] * m + idx[1]] = v;
            }
            other => return Err(err(format!("unknown parameter `{other}`"))),
        }
    }
    let incomplete = |what: &str| Error::Parse {
        line: 0,
        msg: format!("parameter table leaves {what} values unset"),
    };
    if let Some(t) = &time {
        if t.shape.iter().chain(&t.rate).any(|v| v.is_nan()) {
            return Err(incomplete("time"));
        }
    }
    if zone.as_ref().is_some_and(|z| z.eta.iter().any(|v| v.is_nan())) {
        return Err(incomplete("zone"));
    }
    let marks = if let Some(e) = exc {
        if !e.alpha.is_finite()
            || e.delta.iter().chain(&e.decay).chain(&e.conversion).chain(&e.phi).any(|v| v.is_nan())
        {
            return Err(incomplete("mark"));
        }
        Some(MarkParams::Excitation(e))
    } else if let Some(f) = fomc {
        if f.theta.iter().any(|v| v.is_nan()) {
            return Err(incomplete("mark"));
        }
        Some(MarkParams::Fomc(f))
    } else if let Some(q) = msthp {
        if q.rho.iter().any(|v| v.is_nan()) {
            return Err(incomplete("mark"));
        }
        Some(MarkParams::Msthp(q))
    } else {
        None
    };
    Ok(ModelParams { time, zone, marks })
}
