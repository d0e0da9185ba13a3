//! First-order Markov chain over zones, with state (previous zone,
//! previous mark), and its conjugate Dirichlet posterior.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Dataset, MarkId, ZoneId};
use crate::num::Real;
use crate::random;

/// Chain state: zone and mark of the last observed event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ZoneState {
    pub zone: ZoneId,
    pub mark: MarkId,
}

impl ZoneState {
    #[inline]
    pub fn index(self, n_marks: usize) -> usize {
        self.zone.index() * n_marks + self.mark.index()
    }
}

/// Transition counts `y[state][z]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZoneCounts {
    pub n_zones: usize,
    pub n_marks: usize,
    pub counts: Vec<u64>,
}

impl ZoneCounts {
    pub fn row(&self, s: ZoneState) -> &[u64] {
        let i = s.index(self.n_marks) * self.n_zones;
        &self.counts[i..i + self.n_zones]
    }
}

pub fn zone_transition_counts(ds: &Dataset) -> ZoneCounts {
    let (z, m) = (ds.zones, ds.n_marks());
    let mut counts = vec![0u64; z * m * z];
    for p in &ds.periods {
        for w in p.events.windows(2) {
            let s = ZoneState {
                zone: w[0].zone,
                mark: w[0].mark,
            };
            counts[s.index(m) * z + w[1].zone.index()] += 1;
        }
    }
    ZoneCounts {
        n_zones: z,
        n_marks: m,
        counts,
    }
}

/// Transition probabilities, one simplex row per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoneParams<F> {
    pub n_zones: usize,
    pub n_marks: usize,
    pub eta: Vec<F>,
}

impl<F: Real> ZoneParams<F> {
    pub fn uniform(n_zones: usize, n_marks: usize) -> Self {
        ZoneParams {
            n_zones,
            n_marks,
            eta: vec![F::one() / F::of_usize(n_zones); n_zones * n_zones * n_marks],
        }
    }

    pub fn row(&self, s: ZoneState) -> &[F] {
        let i = s.index(self.n_marks) * self.n_zones;
        &self.eta[i..i + self.n_zones]
    }

    pub fn row_mut(&mut self, s: ZoneState) -> &mut [F] {
        let i = s.index(self.n_marks) * self.n_zones;
        &mut self.eta[i..i + self.n_zones]
    }

    pub fn n_states(&self) -> usize {
        self.n_zones * self.n_marks
    }

    fn checked_row(&self, s: ZoneState) -> Result<&[F]> {
        let row = self.row(s);
        let sum: F = row.iter().copied().sum();
        if row.iter().any(|&p| p < F::zero()) || (sum - F::one()).abs() > F::of(1e-6) {
            return Err(Error::Domain(format!(
                "zone transition row for state ({}, {}) is not a simplex",
                s.zone.0, s.mark.0
            )));
        }
        Ok(row)
    }
}

pub fn zone_log_prob<F: Real>(state: ZoneState, next: ZoneId, eta: &ZoneParams<F>) -> Result<F> {
    Ok(eta.checked_row(state)?[next.index()].ln())
}

pub fn sample_zone<F: Real, R: Rng + ?Sized>(
    state: ZoneState,
    eta: &ZoneParams<F>,
    rng: &mut R,
) -> Result<ZoneId> {
    let row = eta.checked_row(state)?;
    Ok(ZoneId::from_index(random::categorical(row, rng)))
}

/// Dirichlet concentrations per state row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZonePosterior {
    pub n_zones: usize,
    pub n_marks: usize,
    pub alpha: Vec<f64>,
    /// Whether any transition left the state in the data.
    pub observed: Vec<bool>,
}

pub fn zone_posterior(y: &ZoneCounts, nu: f64) -> Result<ZonePosterior> {
    if !(nu > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Dirichlet concentration must be positive, got {nu}"
        )));
    }
    let z = y.n_zones;
    let observed = y
        .counts
        .chunks(z)
        .map(|row| row.iter().any(|&c| c > 0))
        .collect();
    Ok(ZonePosterior {
        n_zones: z,
        n_marks: y.n_marks,
        alpha: y.counts.iter().map(|&c| c as f64 + nu).collect(),
        observed,
    })
}

impl ZonePosterior {
    pub fn row(&self, s: ZoneState) -> &[f64] {
        let i = s.index(self.n_marks) * self.n_zones;
        &self.alpha[i..i + self.n_zones]
    }

    pub fn mean(&self) -> ZoneParams<f64> {
        let eta = self
            .alpha
            .chunks(self.n_zones)
            .flat_map(|row| {
                let s: f64 = row.iter().sum();
                row.iter().map(move |a| a / s)
            })
            .collect();
        ZoneParams {
            n_zones: self.n_zones,
            n_marks: self.n_marks,
            eta,
        }
    }

    /// Posterior draw. States never left in the data use the prior mean.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ZoneParams<f64> {
        let z = self.n_zones;
        let mut eta = Vec::with_capacity(self.alpha.len());
        for (row, &obs) in self.alpha.chunks(z).zip(&self.observed) {
            if obs {
                eta.extend(random::dirichlet(row, rng));
            } else {
                let s: f64 = row.iter().sum();
                eta.extend(row.iter().map(|a| a / s));
            }
        }
        ZoneParams {
            n_zones: z,
            n_marks: self.n_marks,
            eta,
        }
    }

    /// `state_zone,state_mark,alpha_1..alpha_Z` rows.
    pub fn to_table(&self) -> String {
        let mut out = String::from("state_zone,state_mark");
        for k in 1..=self.n_zones {
            let _ = write!(out, ",alpha_{k}");
        }
        out.push('\n');
        for z in 0..self.n_zones {
            for m in 0..self.n_marks {
                let s = ZoneState {
                    zone: ZoneId::from_index(z),
                    mark: MarkId::from_index(m),
                };
                let _ = write!(out, "{},{}", z + 1, m + 1);
                for a in self.row(s) {
                    let _ = write!(out, ",{a}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Reload a table written by [`ZonePosterior::to_table`] with prior `nu`.
    pub fn from_table(text: &str, nu: f64) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse {
            line: 1,
            msg: "empty zone posterior table".into(),
        })?;
        let n_zones = header.split(',').count() - 2;
        let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        for (k, l) in lines.enumerate() {
            let f: Vec<&str> = l.split(',').collect();
            let err = || Error::Parse {
                line: k + 2,
                msg: format!("malformed zone posterior row `{l}`"),
            };
            if f.len() != n_zones + 2 {
                return Err(err());
            }
            let z: usize = f[0].parse().map_err(|_| err())?;
            let m: usize = f[1].parse().map_err(|_| err())?;
            let a = f[2..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| err()))
                .collect::<Result<Vec<_>>>()?;
            rows.push((z, m, a));
        }
        let n_marks = rows.iter().map(|r| r.1).max().unwrap_or(0);
        let mut alpha = vec![0.0; n_zones * n_marks * n_zones];
        for (z, m, a) in rows {
            let i = ((z - 1) * n_marks + (m - 1)) * n_zones;
            alpha[i..i + n_zones].copy_from_slice(&a);
        }
        let observed = alpha
            .chunks(n_zones)
            .map(|row| row.iter().any(|&a| (a - nu).abs() > 1e-12))
            .collect();
        Ok(ZonePosterior {
            n_zones,
            n_marks,
            alpha,
            observed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::parse_events;
    use crate::random::derive_rng;

    const SNAPSHOT: &str = "i,id,period,team_id,time,zone,mark
1,101,1,1,0,2,18
2,101,1,1,1,2,19
3,101,1,2,3,1,8
4,101,1,1,6,3,16
5,101,1,1,8,3,18
6,101,1,1,15,2,18
7,101,1,1,16,1,19
8,101,1,2,19,1,12
";

    fn st(z: u8, m: u16) -> ZoneState {
        ZoneState {
            zone: ZoneId(z),
            mark: MarkId(m),
        }
    }

    #[test]
    fn snapshot_transitions() {
        let ds = parse_events(SNAPSHOT).unwrap();
        let y = zone_transition_counts(&ds);
        assert_eq!(y.row(st(2, 18)), &[1, 1, 0]);
        assert_eq!(y.row(st(3, 18)), &[0, 1, 0]);
        assert_eq!(y.row(st(2, 19)), &[1, 0, 0]);
        assert_eq!(y.counts.iter().sum::<u64>(), 7);
    }

    #[test]
    fn single_event_periods_have_no_transitions() {
        let ds = parse_events("i,id,period,team_id,time,zone,mark\n1,1,1,1,0,2,3\n2,1,2,2,0,2,18\n").unwrap();
        assert!(zone_transition_counts(&ds).counts.iter().all(|&c| c == 0));
    }

    #[test]
    fn hand_tallied_chain() {
        use crate::event::fixtures::toy;
        use crate::event::Taxonomy;
        // path (z,m): (1,1) (2,1) (2,2) (1,1) (2,1)
        let ds = toy(
            Taxonomy::paired(&["A"]),
            3,
            &[(1, 1, vec![(0.0, 1, 1), (1.0, 2, 1), (2.0, 2, 2), (3.0, 1, 1), (4.0, 2, 1)])],
        );
        let y = zone_transition_counts(&ds);
        assert_eq!(y.row(st(1, 1)), &[0, 2, 0]);
        assert_eq!(y.row(st(2, 1)), &[0, 1, 0]);
        assert_eq!(y.row(st(2, 2)), &[1, 0, 0]);
    }

    #[test]
    fn conjugate_update() {
        let y = ZoneCounts {
            n_zones: 3,
            n_marks: 1,
            counts: vec![0, 0, 0, 3, 1, 0, 0, 0, 0],
        };
        let post = zone_posterior(&y, 1.0).unwrap();
        assert_eq!(post.row(st(1, 1)), &[1.0, 1.0, 1.0]);
        assert_eq!(post.row(st(2, 1)), &[4.0, 2.0, 1.0]);
        let mean = post.mean();
        let row = mean.row(st(2, 1));
        for (got, want) in row.iter().zip([4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(zone_posterior(&y, 0.0).is_err());
        let back = ZonePosterior::from_table(&post.to_table(), 1.0).unwrap();
        assert_eq!(back, post);
    }

    #[test]
    fn unobserved_rows_use_prior_mean_in_draws() {
        let y = ZoneCounts {
            n_zones: 3,
            n_marks: 1,
            counts: vec![0, 0, 0, 3, 1, 0, 0, 0, 0],
        };
        let post = zone_posterior(&y, 1.0).unwrap();
        let d = post.draw(&mut derive_rng(1, 0));
        assert_eq!(d.row(st(1, 1)), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn log_prob_and_sampling() {
        let mut eta = ZoneParams::<f64>::uniform(3, 1);
        eta.row_mut(st(1, 1)).copy_from_slice(&[0.25, 0.5, 0.25]);
        assert!((zone_log_prob(st(1, 1), ZoneId(2), &eta).unwrap() - 0.5f64.ln()).abs() < 1e-15);

        eta.row_mut(st(2, 1)).copy_from_slice(&[1.0, 0.0, 0.0]);
        let mut rng = derive_rng(9, 0);
        for _ in 0..1000 {
            assert_eq!(sample_zone(st(2, 1), &eta, &mut rng).unwrap(), ZoneId(1));
        }

        let probs = [0.2, 0.3, 0.5];
        eta.row_mut(st(3, 1)).copy_from_slice(&probs);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_zone(st(3, 1), &eta, &mut rng).unwrap().index()] += 1;
        }
        for k in 0..3 {
            let p = probs[k];
            let sd = (p * (1.0 - p) / n as f64).sqrt();
            assert!((counts[k] as f64 / n as f64 - p).abs() < 3.0 * sd);
        }

        eta.row_mut(st(3, 1)).copy_from_slice(&[0.5, 0.6, 0.0]);
        assert!(zone_log_prob(st(3, 1), ZoneId(1), &eta).is_err());
    }
}
