//! Clustering diagnostics for unmarked event times: Ripley's K in one
//! dimension, exponential-kernel Hawkes processes, and Poisson and Gamma
//! renewal fits.

use std::fmt::Write as _;

use rand::Rng;
use statrs::function::gamma::digamma;

use crate::error::{invalid, Error, Result};
use crate::num::logistic;
use crate::random;

fn check_times(times: &[f64], horizon: f64) -> Result<()> {
    if !(horizon > 0.0) {
        return Err(invalid(format!("horizon must be positive, got {horizon}")));
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(invalid("times must be sorted"));
    }
    if times.iter().any(|&t| !(t >= 0.0 && t <= horizon)) {
        return Err(invalid("times must lie in [0, horizon]"));
    }
    Ok(())
}

fn edge_weight(ti: f64, d: f64, horizon: f64) -> f64 {
    if d <= ti.min(horizon - ti) {
        1.0
    } else {
        2.0
    }
}

/// Edge-corrected estimate `K̂(t)` at each grid value. `times` must be
/// sorted.
pub fn k_function(times: &[f64], horizon: f64, grid: &[f64]) -> Result<Vec<f64>> {
    k_function_weighted(times, horizon, grid, true)
}

/// As [`k_function`]; `edge = false` sets every pair weight to one.
pub fn k_function_weighted(times: &[f64], horizon: f64, grid: &[f64], edge: bool) -> Result<Vec<f64>> {
    let n = times.len();
    if n < 2 {
        return Err(invalid("K-function needs at least two events"));
    }
    check_times(times, horizon)?;
    let t_max = grid.iter().copied().fold(0.0, f64::max);
    // weighted pair distances no longer than the largest grid value
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = times[j] - times[i];
            if d > t_max {
                break;
            }
            let (wi, wj) = if edge {
                (edge_weight(times[i], d, horizon), edge_weight(times[j], d, horizon))
            } else {
                (1.0, 1.0)
            };
            pairs.push((d, wi + wj));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cum = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for &(_, w) in &pairs {
        acc += w;
        cum.push(acc);
    }
    let scale = horizon / (n as f64 * n as f64);
    Ok(grid
        .iter()
        .map(|&t| {
            let k = pairs.partition_point(|p| p.0 <= t);
            if k == 0 {
                0.0
            } else {
                scale * cum[k - 1]
            }
        })
        .collect())
}

/// One-dimensional Hawkes process with intensity
/// `μ + Σ_{t_j < t} ε β e^{−β (t − t_j)}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hawkes1DParams {
    pub mu: f64,
    pub eps: f64,
    pub beta: f64,
}

impl Hawkes1DParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.beta > 0.0 && self.eps >= 0.0 && self.eps < 1.0) {
            return Err(Error::Domain(format!(
                "Hawkes parameters need mu > 0, 0 <= eps < 1, beta > 0; got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Log-likelihood on `[0, horizon]` and its gradient in (μ, ε, β).
pub fn hawkes1d_loglik_grad(times: &[f64], horizon: f64, p: &Hawkes1DParams) -> Result<(f64, [f64; 3])> {
    check_times(times, horizon)?;
    if !(p.mu > 0.0 && p.beta > 0.0 && p.eps >= 0.0) {
        return Err(Error::Domain(format!("invalid Hawkes parameters {p:?}")));
    }
    let (mu, eps, beta) = (p.mu, p.eps, p.beta);
    // a = Σ_{j<i} e^{−β(t_i − t_j)}, b = ∂a/∂β
    let (mut a, mut b) = (0.0, 0.0);
    let mut ll = -mu * horizon;
    let mut g = [-horizon, 0.0, 0.0];
    for (i, &t) in times.iter().enumerate() {
        if i > 0 {
            let dt = t - times[i - 1];
            let d = (-beta * dt).exp();
            b = d * (b - dt * (1.0 + a));
            a = d * (1.0 + a);
        }
        let lam = mu + eps * beta * a;
        ll += lam.ln();
        g[0] += 1.0 / lam;
        g[1] += beta * a / lam;
        g[2] += eps * (a + beta * b) / lam;
        let r = horizon - t;
        let e = (-beta * r).exp();
        ll -= eps * (1.0 - e);
        g[1] -= 1.0 - e;
        g[2] -= eps * r * e;
    }
    Ok((ll, g))
}

pub fn hawkes1d_loglik(times: &[f64], horizon: f64, p: &Hawkes1DParams) -> Result<f64> {
    Ok(hawkes1d_loglik_grad(times, horizon, p)?.0)
}

/// Ogata thinning on `(0, horizon)`.
pub fn hawkes1d_simulate<R: Rng + ?Sized>(p: &Hawkes1DParams, horizon: f64, rng: &mut R) -> Result<Vec<f64>> {
    p.validate()?;
    let mut out = Vec::new();
    let mut t = 0.0;
    // excitation part of the intensity just after time t
    let mut exc = 0.0;
    loop {
        let bound = p.mu + exc;
        let w = random::gamma(1.0, bound, rng);
        exc *= (-p.beta * w).exp();
        t += w;
        if t >= horizon {
            return Ok(out);
        }
        if rng.random::<f64>() * bound <= p.mu + exc {
            out.push(t);
            exc += p.eps * p.beta;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HawkesFit {
    pub params: Hawkes1DParams,
    pub loglik: f64,
    /// False when no start reached a stationary point; `params` is then
    /// the best point found.
    pub converged: bool,
}

/// Minimise `f` with BFGS and backtracking; returns (x, f, converged).
fn bfgs(f: &dyn Fn(&[f64]) -> Option<(f64, Vec<f64>)>, x0: &[f64], max_iter: usize) -> Option<(Vec<f64>, f64, bool)> {
    let n = x0.len();
    let (mut fx, mut g) = f(x0)?;
    let mut x = x0.to_vec();
    let mut h = vec![vec![0.0; n]; n];
    for (i, row) in h.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _ in 0..max_iter {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-6 * (1.0 + fx.abs()).sqrt() {
            return Some((x, fx, true));
        }
        let mut dir: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i][j] * g[j]).sum::<f64>()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            for (i, row) in h.iter_mut().enumerate() {
                row.iter_mut().for_each(|v| *v = 0.0);
                row[i] = 1.0;
            }
            dir = g.iter().map(|v| -v).collect();
            slope = -gnorm * gnorm;
        }
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let xn: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            if let Some((fv, gv)) = f(&xn) {
                if fv.is_finite() && fv <= fx + 1e-4 * step * slope {
                    next = Some((xn, fv, gv));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = next else {
            return Some((x, fx, gnorm < 1e-3));
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let converged_f = (fx - fn_).abs() < 1e-12 * (1.0 + fx.abs());
        x = xn;
        fx = fn_;
        g = gn;
        if converged_f {
            return Some((x, fx, true));
        }
        if sy > 1e-12 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            for i in 0..n {
                for j in 0..n {
                    h[i][j] += (sy + yhy) * s[i] * s[j] / (sy * sy) - (hy[i] * s[j] + s[i] * hy[j]) / sy;
                }
            }
        }
    }
    Some((x, fx, false))
}

/// Maximum likelihood over μ > 0, 0 ≤ ε < 1, β > 0 from `starts`
/// multi-start points, optimising in (log μ, logit ε, log β).
pub fn fit_hawkes1d(times: &[f64], horizon: f64, starts: usize) -> Result<HawkesFit> {
    check_times(times, horizon)?;
    if times.len() < 2 {
        return Err(invalid("Hawkes fit needs at least two events"));
    }
    if starts == 0 {
        return Err(invalid("need at least one start"));
    }
    let n = times.len() as f64;
    let rate = n / horizon;
    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p = Hawkes1DParams {
            mu: x[0].exp(),
            eps: logistic(x[1]),
            beta: x[2].exp(),
        };
        let (ll, g) = hawkes1d_loglik_grad(times, horizon, &p).ok()?;
        if !ll.is_finite() {
            return None;
        }
        let grad = vec![
            -g[0] * p.mu,
            -g[1] * p.eps * (1.0 - p.eps),
            -g[2] * p.beta,
        ];
        Some((-ll, grad))
    };
    let eps_grid = [0.05, 0.3, 0.6, 0.85];
    let beta_grid = [0.1 * rate, 10.0 * rate];
    let mut best: Option<HawkesFit> = None;
    for k in 0..starts {
        let eps0: f64 = eps_grid[k % eps_grid.len()];
        let beta0: f64 = beta_grid[(k / eps_grid.len()) % beta_grid.len()] * (1.0 + (k / 8) as f64);
        let x0 = [(rate * (1.0 - eps0)).ln(), (eps0 / (1.0 - eps0)).ln(), beta0.ln()];
        let Some((x, fx, conv)) = bfgs(&objective, &x0, 500) else {
            continue;
        };
        let fit = HawkesFit {
            params: Hawkes1DParams {
                mu: x[0].exp(),
                eps: logistic(x[1]),
                beta: x[2].exp(),
            },
            loglik: -fx,
            converged: conv,
        };
        if best.is_none_or(|b| fit.loglik > b.loglik) {
            best = Some(fit);
        }
    }
    let best = best.ok_or_else(|| Error::Domain("Hawkes likelihood was not finite at any start".into()))?;
    Ok(best)
}

/// Homogeneous Poisson rate `n / T`.
pub fn fit_poisson(times: &[f64], horizon: f64) -> Result<f64> {
    if times.len() < 2 {
        return Err(invalid("Poisson fit needs at least two events"));
    }
    if !(horizon > 0.0) {
        return Err(invalid("horizon must be positive"));
    }
    Ok(times.len() as f64 / horizon)
}

/// Poisson log-likelihood `n log λ − λ T`.
pub fn poisson_loglik(n: usize, horizon: f64, rate: f64) -> f64 {
    n as f64 * rate.ln() - rate * horizon
}

fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + x2 / 2.0 + (1.0 / x) * x2 * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// Gamma maximum likelihood (shape, rate) for positive values, by Newton
/// iterations on the shape equation `ln a − ψ(a) = ln x̄ − mean(ln x)`.
pub fn fit_gamma(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(invalid("Gamma fit needs at least two values"));
    }
    if values.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(invalid("Gamma fit needs positive finite values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let s = mean.ln() - values.iter().map(|v| v.ln()).sum::<f64>() / n;
    if !(s > 1e-12) {
        return Err(Error::Domain("degenerate values: all equal".into()));
    }
    let mut a = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let f = a.ln() - digamma(a) - s;
        let df = 1.0 / a - trigamma(a);
        let next = (a - f / df).max(a / 10.0);
        let done = (next - a).abs() < 1e-12 * a;
        a = next;
        if done {
            break;
        }
    }
    Ok((a, a / mean))
}

/// Gamma renewal fit to the gaps between sorted event times.
pub fn fit_gamma_renewal(times: &[f64]) -> Result<(f64, f64)> {
    if times.len() < 3 {
        return Err(invalid("renewal fit needs at least two gaps"));
    }
    let gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    fit_gamma(&gaps)
}

/// Sorted `(value, i/n)` pairs.
pub fn ecdf(values: &[f64]) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(invalid("ECDF of an empty sample"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.into_iter().enumerate().map(|(i, x)| (x, (i + 1) as f64 / n)).collect())
}

/// Rows `t,khat_minus_2t,source`.
pub fn k_table_csv(rows: &[(String, Vec<f64>, Vec<f64>)]) -> String {
    let mut s = String::from("t,khat_minus_2t,source\n");
    for (source, grid, k) in rows {
        for (t, v) in grid.iter().zip(k) {
            let _ = writeln!(s, "{t},{:.6},{source}", v - 2.0 * t);
        }
    }
    s
}

/// Rows `dt,ecdf,source`.
pub fn ecdf_csv(rows: &[(String, Vec<(f64, f64)>)]) -> String {
    let mut s = String::from("dt,ecdf,source\n");
    for (source, table) in rows {
        for (x, f) in table {
            let _ = writeln!(s, "{x},{f:.6},{source}");
        }
    }
    s
}
