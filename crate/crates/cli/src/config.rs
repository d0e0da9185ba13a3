//! Run configuration: a JSON file whose fields mirror the command-line
//! flags. Flags override file values field by field.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use flexpoint::inference::Priors;

use crate::Failure;

#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Event table (`i,id,period,team_id,time,zone,mark`).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Team names and game schedule in JSON.
    #[arg(long)]
    pub sidecar: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `football` or a comma-separated list of event names paired into
    /// Home_/Away_ marks.
    #[arg(long)]
    pub taxonomy: Option<String>,
    #[arg(long)]
    pub zones: Option<usize>,
    /// Model family: sbeta, vbeta, mbeta, mbetaa, fomc or msthp.
    #[arg(long)]
    pub model: Option<String>,
    /// Screening window `W`.
    #[arg(long)]
    pub window: Option<usize>,
    /// Retained pairs `N`.
    #[arg(long)]
    pub n: Option<usize>,
    /// `zone` or `global` scope of `N`.
    #[arg(long)]
    pub scope: Option<String>,
    /// Rule table written by `screen`.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Tie home and away background probabilities.
    #[arg(long)]
    pub tying: Option<bool>,
    #[arg(skip)]
    pub priors: Option<Priors>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fit directories written by `fit`, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub fits: Option<Vec<PathBuf>>,
    /// Posterior draws `R` used by `evaluate` and `simulate`.
    #[arg(long)]
    pub draws: Option<usize>,
    /// Rollouts per draw `Q`.
    #[arg(long)]
    pub q: Option<usize>,
    /// Forecast interval in seconds.
    #[arg(long)]
    pub interval: Option<f64>,
    /// Forecast horizon per period in seconds.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Mark labels, comma-separated (e.g. `Home_Shot`).
    #[arg(long, value_delimiter = ',')]
    pub target_marks: Option<Vec<String>>,
    /// Moving-average baseline window in intervals.
    #[arg(long)]
    pub ma_window: Option<usize>,
    /// Moving-average probability of the first interval.
    #[arg(long)]
    pub ma_prior: Option<f64>,
    /// Largest lag of the K-function grid in seconds.
    #[arg(long)]
    pub max_lag: Option<f64>,
    /// Grid step of the K-function in seconds.
    #[arg(long)]
    pub lag_step: Option<f64>,
    /// Simulated replicates per fitted reference process.
    #[arg(long)]
    pub replicates: Option<usize>,
}

macro_rules! overlay {
    ($base:ident, $flags:ident, $($f:ident),*) => {
        $(if $flags.$f.is_some() { $base.$f = $flags.$f.clone(); })*
    };
}

impl RunConfig {
    pub fn load(path: Option<&Path>, flags: &RunConfig) -> Result<Self, Failure> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Failure::validation(format!("config {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Failure::validation(format!("config {}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        overlay!(
            cfg, flags, data, sidecar, out, taxonomy, zones, model, window, n, scope, rules, tying,
            priors, chains, warmup, iters, seed, fits, draws, q, interval, horizon, target_marks,
            ma_window, ma_prior, max_lag, lag_step, replicates
        );
        Ok(cfg)
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }

    pub fn existing(&self, path: &Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
        let p = path
            .clone()
            .ok_or_else(|| Failure::validation(format!("missing --{what}")))?;
        if !p.exists() {
            return Err(Failure::validation(format!("{what} path {} does not exist", p.display())));
        }
        Ok(p)
    }

    pub fn seed(&self) -> Result<u64, Failure> {
        self.seed.ok_or_else(|| Failure::validation("this command needs --seed"))
    }

    pub fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir)
            .map_err(|e| Failure::runtime(format!("output directory {}: {e}", dir.display())))?;
        Ok(dir)
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
