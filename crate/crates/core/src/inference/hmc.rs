//! Hamiltonian Monte Carlo with a fixed integration time, jittered step
//! count, dual-averaging step size and windowed diagonal mass adaptation.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::random::{derive_rng, standard_normal, SimRng};

/// Differentiable log density on `R^d`.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;
    /// Log density at `x`, writing the gradient into `grad`.
    fn log_density_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcConfig {
    pub chains: usize,
    pub warmup: usize,
    pub iters: usize,
    pub seed: u64,
    pub target_accept: f64,
    /// Integration time in whitened units.
    pub trajectory: f64,
    pub max_leapfrog: usize,
    /// Initial points are uniform on `[-r, r]^d`.
    pub init_radius: f64,
    /// Fixed starting point for every chain instead of random inits.
    pub init: Option<Vec<f64>>,
}

impl Default for HmcConfig {
    fn default() -> Self {
        HmcConfig {
            chains: 4,
            warmup: 500,
            iters: 500,
            seed: 1,
            target_accept: 0.8,
            trajectory: 2.0,
            max_leapfrog: 256,
            init_radius: 2.0,
            init: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainStats {
    pub step_size: f64,
    pub mean_accept: f64,
    pub divergences: usize,
    pub mean_leapfrog: f64,
    pub inv_mass: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcOutput {
    /// `draws[chain][iter]` after warmup.
    pub draws: Vec<Vec<Vec<f64>>>,
    pub stats: Vec<ChainStats>,
}

const MAX_INIT_TRIES: usize = 100;
const DIVERGENCE: f64 = 1000.0;
const EARLY_LEAPFROG: usize = 16;

pub fn run_hmc<T: LogDensity>(target: &T, cfg: &HmcConfig) -> Result<HmcOutput> {
    if cfg.chains == 0 || cfg.iters == 0 {
        return Err(Error::InvalidArgument("HMC needs at least one chain and one iteration".into()));
    }
    if !(cfg.target_accept > 0.0 && cfg.target_accept < 1.0) || !(cfg.trajectory > 0.0) {
        return Err(Error::InvalidArgument("invalid HMC tuning settings".into()));
    }
    if target.dim() == 0 {
        // nothing to sample; keep the draw grid so summaries stay aligned
        let stats = ChainStats {
            step_size: 0.0,
            mean_accept: 1.0,
            divergences: 0,
            mean_leapfrog: 0.0,
            inv_mass: Vec::new(),
        };
        return Ok(HmcOutput {
            draws: vec![vec![Vec::new(); cfg.iters]; cfg.chains],
            stats: vec![stats; cfg.chains],
        });
    }
    let results: Vec<Result<(Vec<Vec<f64>>, ChainStats)>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| Chain::new(target, cfg, c)?.run())
        .collect();
    let mut out = HmcOutput {
        draws: Vec::with_capacity(cfg.chains),
        stats: Vec::with_capacity(cfg.chains),
    };
    for r in results {
        let (d, s) = r?;
        out.draws.push(d);
        out.stats.push(s);
    }
    Ok(out)
}

struct Chain<'a, T> {
    target: &'a T,
    cfg: &'a HmcConfig,
    rng: SimRng,
    x: Vec<f64>,
    lp: f64,
    grad: Vec<f64>,
    inv_mass: Vec<f64>,
    eps: f64,
    id: usize,
}

/// Dual averaging of the log step size.
struct DualAverage {
    mu: f64,
    h_bar: f64,
    log_eps_bar: f64,
    t: f64,
    target: f64,
}

impl DualAverage {
    fn new(eps: f64, target: f64) -> Self {
        DualAverage {
            mu: (10.0 * eps).ln(),
            h_bar: 0.0,
            log_eps_bar: 0.0,
            t: 0.0,
            target,
        }
    }

    fn update(&mut self, accept: f64) -> f64 {
        const GAMMA: f64 = 0.05;
        const T0: f64 = 10.0;
        const KAPPA: f64 = 0.75;
        self.t += 1.0;
        let w = 1.0 / (self.t + T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept);
        let log_eps = self.mu - self.t.sqrt() / GAMMA * self.h_bar;
        let eta = self.t.powf(-KAPPA);
        self.log_eps_bar = eta * log_eps + (1.0 - eta) * self.log_eps_bar;
        log_eps.exp()
    }

    fn final_eps(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

/// End points of the slow adaptation windows, doubling in length.
fn mass_windows(warmup: usize) -> Vec<usize> {
    if warmup < 150 {
        // too short for staged adaptation: one window over the middle
        return if warmup >= 20 { vec![warmup * 9 / 10] } else { Vec::new() };
    }
    let (init, term) = (75, 50);
    let end = warmup - term;
    let mut out = Vec::new();
    let mut start = init;
    let mut len = 25;
    while start < end {
        let mut stop = start + len;
        if stop + 2 * len > end {
            stop = end;
        }
        out.push(stop);
        start = stop;
        len *= 2;
    }
    out
}

impl<'a, T: LogDensity> Chain<'a, T> {
    fn new(target: &'a T, cfg: &'a HmcConfig, id: usize) -> Result<Self> {
        let d = target.dim();
        let mut rng = derive_rng(cfg.seed, id as u64);
        let mut grad = vec![0.0; d];
        let mut last_err = None;
        for _ in 0..MAX_INIT_TRIES {
            let x: Vec<f64> = match &cfg.init {
                Some(x0) if x0.len() == d => x0.clone(),
                Some(_) => return Err(Error::InvalidArgument("initial point has the wrong dimension".into())),
                None => (0..d)
                    .map(|_| rng.random_range(-cfg.init_radius..=cfg.init_radius))
                    .collect(),
            };
            match target.log_density_grad(&x, &mut grad) {
                Ok(lp) if lp.is_finite() => {
                    return Ok(Chain {
                        target,
                        cfg,
                        rng,
                        x,
                        lp,
                        grad,
                        inv_mass: vec![1.0; d],
                        eps: 0.1,
                        id,
                    })
                }
                Ok(_) => last_err = Some(Error::NonFinite { block: "log density".into() }),
                Err(e) => last_err = Some(e),
            }
            if cfg.init.is_some() {
                break;
            }
        }
        Err(Error::Sampler(format!(
            "chain {id}: no finite starting point after {MAX_INIT_TRIES} attempts ({})",
            last_err.map_or_else(String::new, |e| e.to_string())
        )))
    }

    /// One leapfrog trajectory. Returns (acceptance probability, divergent, steps).
    fn transition(&mut self, eps: f64, n_steps: usize) -> (f64, bool, usize) {
        let d = self.x.len();
        let p0: Vec<f64> = (0..d)
            .map(|i| standard_normal(&mut self.rng) / self.inv_mass[i].sqrt())
            .collect();
        let kinetic = |p: &[f64], im: &[f64]| 0.5 * p.iter().zip(im).map(|(a, m)| a * a * m).sum::<f64>();
        let h0 = -self.lp + kinetic(&p0, &self.inv_mass);
        let mut x = self.x.clone();
        let mut p = p0;
        let mut g = self.grad.clone();
        let mut lp = self.lp;
        let mut ok = true;
        for _ in 0..n_steps {
            for i in 0..d {
                p[i] += 0.5 * eps * g[i];
                x[i] += eps * self.inv_mass[i] * p[i];
            }
            match self.target.log_density_grad(&x, &mut g) {
                Ok(v) if v.is_finite() => lp = v,
                _ => {
                    ok = false;
                    break;
                }
            }
            for i in 0..d {
                p[i] += 0.5 * eps * g[i];
            }
            if -lp + kinetic(&p, &self.inv_mass) - h0 > DIVERGENCE {
                ok = false;
                break;
            }
        }
        if !ok {
            return (0.0, true, n_steps);
        }
        let h1 = -lp + kinetic(&p, &self.inv_mass);
        let accept = if h1.is_finite() { (h0 - h1).exp().min(1.0) } else { 0.0 };
        if self.rng.random::<f64>() < accept {
            self.x = x;
            self.lp = lp;
            self.grad = g;
        }
        (accept, false, n_steps)
    }

    fn n_steps(&mut self, eps: f64, cap: usize) -> usize {
        let base = (self.cfg.trajectory / eps).max(1.0);
        let jitter = self.rng.random_range(0.8..1.2);
        ((base * jitter).round() as usize).clamp(1, cap)
    }

    /// Step size for which one leapfrog step has acceptance near one half.
    fn initial_step(&mut self) -> f64 {
        let mut eps: f64 = 0.1;
        let probe = |chain: &mut Self, eps: f64| {
            let saved = (chain.x.clone(), chain.lp, chain.grad.clone());
            let (a, div, _) = chain.transition(eps, 1);
            (chain.x, chain.lp, chain.grad) = saved;
            if div {
                0.0
            } else {
                a
            }
        };
        let a0 = probe(self, eps);
        let up = a0 > 0.5;
        for _ in 0..50 {
            let a = probe(self, eps);
            if up && a <= 0.5 || !up && a > 0.5 {
                break;
            }
            eps = if up { eps * 2.0 } else { eps / 2.0 };
        }
        eps.clamp(1e-8, 1e3)
    }

    fn run(mut self) -> Result<(Vec<Vec<f64>>, ChainStats)> {
        let cfg = self.cfg;
        let d = self.x.len();
        if d == 0 {
            let draws = vec![Vec::new(); cfg.iters];
            return Ok((draws, ChainStats {
                step_size: 0.0,
                mean_accept: 1.0,
                divergences: 0,
                mean_leapfrog: 0.0,
                inv_mass: Vec::new(),
            }));
        }
        self.eps = self.initial_step();
        let mut da = DualAverage::new(self.eps, cfg.target_accept);
        let windows = mass_windows(cfg.warmup);
        let mut window_start = if cfg.warmup >= 150 { 75 } else { cfg.warmup / 10 };
        let mut next_window = 0;
        let (mut sum, mut sum_sq, mut n_win) = (vec![0.0; d], vec![0.0; d], 0usize);
        for it in 0..cfg.warmup {
            let eps = self.eps;
            // before the first metric estimate the unit mass can be badly
            // scaled; shorter trajectories are enough to move towards the bulk
            let cap = if next_window == 0 && !windows.is_empty() {
                cfg.max_leapfrog.min(EARLY_LEAPFROG)
            } else {
                cfg.max_leapfrog
            };
            let n = self.n_steps(eps, cap);
            let (a, _, _) = self.transition(eps, n);
            self.eps = da.update(a);
            if it >= window_start && next_window < windows.len() {
                for i in 0..d {
                    sum[i] += self.x[i];
                    sum_sq[i] += self.x[i] * self.x[i];
                }
                n_win += 1;
                if it + 1 == windows[next_window] {
                    let nf = n_win as f64;
                    for i in 0..d {
                        let mean = sum[i] / nf;
                        let var = ((sum_sq[i] / nf - mean * mean) * nf / (nf - 1.0).max(1.0)).max(0.0);
                        self.inv_mass[i] = (nf / (nf + 5.0)) * var + 1e-3 * (5.0 / (nf + 5.0));
                    }
                    sum.iter_mut().for_each(|v| *v = 0.0);
                    sum_sq.iter_mut().for_each(|v| *v = 0.0);
                    n_win = 0;
                    window_start = it + 1;
                    next_window += 1;
                    self.eps = self.initial_step();
                    da = DualAverage::new(self.eps, cfg.target_accept);
                }
            }
        }
        if cfg.warmup > 0 {
            self.eps = da.final_eps();
        }
        let mut draws = Vec::with_capacity(cfg.iters);
        let (mut acc, mut div, mut steps) = (0.0, 0usize, 0usize);
        for _ in 0..cfg.iters {
            let eps = self.eps * self.rng.random_range(0.9..1.1);
            let n = self.n_steps(self.eps, cfg.max_leapfrog);
            let (a, dv, s) = self.transition(eps, n);
            acc += a;
            div += dv as usize;
            steps += s;
            draws.push(self.x.clone());
        }
        let n = cfg.iters as f64;
        if !self.lp.is_finite() {
            return Err(Error::Sampler(format!("chain {}: non-finite log density", self.id)));
        }
        Ok((draws, ChainStats {
            step_size: self.eps,
            mean_accept: acc / n,
            divergences: div,
            mean_leapfrog: steps as f64 / n,
            inv_mass: self.inv_mass,
        }))
    }
}
