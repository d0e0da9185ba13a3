//! Posterior draws in natural parameter values, with text round trips and
//! convergence summaries.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::convergence::{ess, rhat};
use super::hmc::{ChainStats, HmcOutput};
use super::layout::ParamLayout;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub names: Vec<String>,
    /// `draws[chain][iter][param]`, post-warmup.
    pub draws: Vec<Vec<Vec<f64>>>,
    pub warmup: usize,
    pub seed: u64,
    pub stats: Vec<ChainStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    /// `None` for a single chain or a parameter that never moved.
    pub rhat: Option<f64>,
    pub neff: Option<f64>,
}

impl PosteriorSamples {
    pub fn from_hmc(layout: &ParamLayout, out: HmcOutput, warmup: usize, seed: u64) -> Self {
        let draws = out
            .draws
            .iter()
            .map(|chain| chain.iter().map(|u| layout.constrain(u).0).collect())
            .collect();
        PosteriorSamples {
            names: layout.theta_names(),
            draws,
            warmup,
            seed,
            stats: out.stats,
        }
    }

    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_iters(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn n_draws(&self) -> usize {
        self.draws.iter().map(Vec::len).sum()
    }

    pub fn param_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Draw `i` counting chain by chain.
    pub fn draw(&self, i: usize) -> &[f64] {
        let n = self.n_iters();
        &self.draws[i / n][i % n]
    }

    pub fn chain_values(&self, j: usize) -> Vec<Vec<f64>> {
        self.draws.iter().map(|c| c.iter().map(|d| d[j]).collect()).collect()
    }

    pub fn values(&self, j: usize) -> Vec<f64> {
        self.draws.iter().flatten().map(|d| d[j]).collect()
    }

    pub fn summary(&self) -> Vec<SummaryRow> {
        (0..self.names.len())
            .map(|j| {
                let xs = self.values(j);
                let n = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / n;
                let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
                let chains = self.chain_values(j);
                SummaryRow {
                    parameter: self.names[j].clone(),
                    mean,
                    sd,
                    rhat: rhat(&chains).ok(),
                    neff: ess(&chains).ok(),
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from("parameter,mean,sd,rhat,neff\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
        for r in self.summary() {
            let _ = writeln!(s, "{},{:.6},{:.6},{},{}", r.parameter, r.mean, r.sd, opt(r.rhat), opt(r.neff.map(f64::round)));
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# warmup={} seed={}", self.warmup, self.seed);
        for (c, st) in self.stats.iter().enumerate() {
            let _ = writeln!(
                s,
                "# chain={} step_size={} accept={:.4} divergences={} leapfrog={:.2}",
                c + 1,
                st.step_size,
                st.mean_accept,
                st.divergences,
                st.mean_leapfrog
            );
        }
        s.push_str("chain,iter,param,value\n");
        for (c, chain) in self.draws.iter().enumerate() {
            for (i, d) in chain.iter().enumerate() {
                for (name, v) in self.names.iter().zip(d) {
                    let _ = writeln!(s, "{},{},{},{}", c + 1, i + 1, name, v);
                }
            }
        }
        s
    }

    /// Parse the output of [`to_csv`](Self::to_csv). Chain statistics are
    /// not restored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut warmup = 0;
        let mut seed = 0;
        let mut names: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
        let mut header_seen = false;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            let err = |msg: String| Error::Parse { line: ln + 1, msg };
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("warmup", v)) => warmup = v.parse().map_err(|_| err(format!("bad warmup `{v}`")))?,
                        Some(("seed", v)) => seed = v.parse().map_err(|_| err(format!("bad seed `{v}`")))?,
                        _ => {}
                    }
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            if !header_seen {
                if line != "chain,iter,param,value" {
                    return Err(err(format!("expected header `chain,iter,param,value`, got `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 4 {
                return Err(err("expected 4 fields".into()));
            }
            let c: usize = f[0].parse().map_err(|_| err(format!("bad chain `{}`", f[0])))?;
            let i: usize = f[1].parse().map_err(|_| err(format!("bad iteration `{}`", f[1])))?;
            let v: f64 = f[3].parse().map_err(|_| err(format!("bad value `{}`", f[3])))?;
            if c == 0 || i == 0 {
                return Err(err("chain and iteration are 1-based".into()));
            }
            let j = *index.entry(f[2].to_string()).or_insert_with(|| {
                names.push(f[2].to_string());
                names.len() - 1
            });
            rows.push((c - 1, i - 1, j, v));
        }
        let n_chains = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let n_iters = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let mut draws = vec![vec![vec![f64::NAN; names.len()]; n_iters]; n_chains];
        for (c, i, j, v) in rows {
            draws[c][i][j] = v;
        }
        if draws.iter().flatten().flatten().any(|v| v.is_nan()) {
            return Err(Error::Parse {
                line: 0,
                msg: "sample table has missing (chain, iter, param) cells".into(),
            });
        }
        Ok(PosteriorSamples {
            names,
            draws,
            warmup,
            seed,
            stats: Vec::new(),
        })
    }
}
