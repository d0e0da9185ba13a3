//! Split-R̂, effective sample size and highest posterior density intervals.

use crate::error::{Error, Result};

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

fn split(chains: &[Vec<f64>]) -> Result<Vec<&[f64]>> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    if n < 4 {
        return Err(Error::InvalidArgument("need at least four draws per chain".into()));
    }
    let half = n / 2;
    Ok(chains
        .iter()
        .flat_map(|c| [&c[..half], &c[n - half..n]])
        .collect())
}

fn degenerate(chains: &[Vec<f64>]) -> bool {
    chains.iter().any(|c| c.iter().all(|&v| v == c[0]))
}

/// Split potential scale reduction factor over `chains[c][iter]`.
pub fn rhat(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.len() < 2 {
        return Err(Error::InvalidArgument("R-hat needs at least two chains".into()));
    }
    let parts = split(chains)?;
    if degenerate(chains) {
        return Err(Error::Domain("degenerate chain: zero variance".into()));
    }
    let n = parts[0].len() as f64;
    let stats: Vec<(f64, f64)> = parts.iter().map(|p| mean_var(p)).collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let w = stats.iter().map(|s| s.1).sum::<f64>() / stats.len() as f64;
    let b = n * mean_var(&means).1;
    let var_plus = (n - 1.0) / n * w + b / n;
    Ok((var_plus / w).sqrt())
}

/// Autocovariance of `x` at lags `0..x.len()`.
fn autocov(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    (0..n)
        .map(|lag| c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64)
        .collect()
}

/// Effective sample size from split chains, using Geyer's initial monotone
/// sequence on the combined autocorrelation.
pub fn ess(chains: &[Vec<f64>]) -> Result<f64> {
    if chains.is_empty() {
        return Err(Error::InvalidArgument("ESS needs at least one chain".into()));
    }
    let parts = split(chains)?;
    if degenerate(chains) {
        return Err(Error::Domain("degenerate chain: zero variance".into()));
    }
    let m = parts.len() as f64;
    let n = parts[0].len();
    let nf = n as f64;
    let acov: Vec<Vec<f64>> = parts.iter().map(|p| autocov(p)).collect();
    let means: Vec<f64> = parts.iter().map(|p| p.iter().sum::<f64>() / nf).collect();
    let w = acov.iter().map(|a| a[0] * nf / (nf - 1.0)).sum::<f64>() / m;
    let b_over_n = if parts.len() > 1 { mean_var(&means).1 } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    let rho = |t: usize| 1.0 - (w - acov.iter().map(|a| a[t]).sum::<f64>() / m) / var_plus;
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        pair = pair.min(prev);
        tau += 2.0 * pair;
        prev = pair;
        t += 2;
    }
    let tau = tau.max(1.0 / (m * nf).log10().max(1.0));
    Ok(m * nf / tau)
}

/// Shortest interval containing `⌈mass · R⌉` of the sorted draws.
pub fn hpd_interval(draws: &[f64], mass: f64) -> Result<(f64, f64)> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::InvalidArgument(format!("HPD mass must lie in (0, 1), got {mass}")));
    }
    if draws.len() < 100 {
        return Err(Error::InvalidArgument("HPD interval needs at least 100 draws".into()));
    }
    let mut x = draws.to_vec();
    x.sort_by(f64::total_cmp);
    let k = ((mass * x.len() as f64).ceil() as usize).max(1);
    let best = (0..=x.len() - k)
        .min_by(|&i, &j| (x[i + k - 1] - x[i]).total_cmp(&(x[j + k - 1] - x[j])))
        .expect("non-empty");
    Ok((x[best], x[best + k - 1]))
}
