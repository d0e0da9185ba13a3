//! Event sequences: marks, zones, periods and datasets.

mod io;
mod taxonomy;

pub use io::{parse_events, parse_events_with, serialize_events, Sidecar, SidecarGame, TIE_JITTER};
pub use taxonomy::{zone_of, MarkId, Side, Taxonomy, TeamId, ZoneId, FOOTBALL_EVENTS};

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Seconds since the start of the period.
    pub t: f64,
    pub zone: ZoneId,
    pub mark: MarkId,
    pub team: TeamId,
}

/// One uninterrupted half of a game. The first event conditions the rest of
/// the sequence but is not itself modelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GamePeriod {
    pub game_id: u64,
    pub period_id: u32,
    pub home_team: TeamId,
    pub away_team: TeamId,
    pub events: Vec<Event>,
    /// Observation horizon in seconds.
    pub t_end: f64,
}

impl GamePeriod {
    /// Events that contribute likelihood terms (all but the first).
    pub fn modelled(&self) -> &[Event] {
        if self.events.is_empty() {
            &[]
        } else {
            &self.events[1..]
        }
    }

    pub fn n_modelled(&self) -> usize {
        self.events.len().saturating_sub(1)
    }

    /// Team attempting an event with mark `m`.
    pub fn team_of(&self, tx: &Taxonomy, m: MarkId) -> TeamId {
        match tx.side(m) {
            Side::Home => self.home_team,
            Side::Away => self.away_team,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub taxonomy: Taxonomy,
    pub zones: usize,
    pub teams: BTreeMap<TeamId, String>,
    pub periods: Vec<GamePeriod>,
}

impl Dataset {
    pub fn empty(taxonomy: Taxonomy, zones: usize) -> Self {
        Dataset {
            taxonomy,
            zones,
            teams: BTreeMap::new(),
            periods: Vec::new(),
        }
    }

    pub fn n_marks(&self) -> usize {
        self.taxonomy.len()
    }

    pub fn n_teams(&self) -> usize {
        self.teams.len()
    }

    /// Dense zero-based index of a team (teams ordered by id).
    pub fn team_index(&self, team: TeamId) -> Option<usize> {
        self.teams.keys().position(|&t| t == team)
    }

    pub fn n_events(&self) -> usize {
        self.periods.iter().map(|p| p.events.len()).sum()
    }

    pub fn n_modelled(&self) -> usize {
        self.periods.iter().map(GamePeriod::n_modelled).sum()
    }

    /// Game ids in schedule order (first appearance).
    pub fn games(&self) -> Vec<u64> {
        let mut seen = HashSet::new();
        self.periods
            .iter()
            .filter(|p| seen.insert(p.game_id))
            .map(|p| p.game_id)
            .collect()
    }

    /// Sum of the period observation horizons.
    pub fn total_horizon(&self) -> f64 {
        self.periods.iter().map(|p| p.t_end).sum()
    }

    /// Keep only the periods of the given games, preserving order.
    pub fn subset_games(&self, games: &BTreeSet<u64>) -> Dataset {
        Dataset {
            taxonomy: self.taxonomy.clone(),
            zones: self.zones,
            teams: self.teams.clone(),
            periods: self
                .periods
                .iter()
                .filter(|p| games.contains(&p.game_id))
                .cloned()
                .collect(),
        }
    }
}

/// First `n_train_games` games (schedule order) for training, the rest for
/// testing. Periods of one game never straddle the split.
pub fn split_train_test(ds: &Dataset, n_train_games: usize) -> Result<(Dataset, Dataset)> {
    let games = ds.games();
    if n_train_games > games.len() {
        return Err(Error::InvalidArgument(format!(
            "requested {n_train_games} training games but only {} are available",
            games.len()
        )));
    }
    let train: BTreeSet<u64> = games[..n_train_games].iter().copied().collect();
    let test: BTreeSet<u64> = games[n_train_games..].iter().copied().collect();
    Ok((ds.subset_games(&train), ds.subset_games(&test)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodCount {
    pub game_id: u64,
    pub period_id: u32,
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub period_counts: Vec<PeriodCount>,
    /// `zone_mark_freq[m][z]`: events of mark `m` in zone `z`.
    pub zone_mark_freq: Vec<Vec<usize>>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// Zone-wise frequency table as CSV (`mark,label,zone_1,..`).
    pub fn frequency_csv(&self, tx: &Taxonomy) -> String {
        let z = self.zone_mark_freq.first().map_or(0, Vec::len);
        let mut out = String::from("mark,label");
        for k in 1..=z {
            out.push_str(&format!(",zone_{k}"));
        }
        out.push('\n');
        for (m, row) in self.zone_mark_freq.iter().enumerate() {
            let id = MarkId::from_index(m);
            out.push_str(&format!("{},{}", id.0, tx.label(id)));
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Check dataset invariants without failing; violations are collected.
pub fn validate(ds: &Dataset) -> ValidationReport {
    let m = ds.n_marks();
    let z = ds.zones;
    let mut freq = vec![vec![0usize; z]; if ds.periods.is_empty() { 0 } else { m }];
    let mut violations = Vec::new();
    let mut ids = HashSet::new();
    let mut counts = Vec::with_capacity(ds.periods.len());
    for p in &ds.periods {
        let tag = format!("game {} period {}", p.game_id, p.period_id);
        if !ids.insert((p.game_id, p.period_id)) {
            violations.push(format!("{tag}: duplicate period id"));
        }
        counts.push(PeriodCount {
            game_id: p.game_id,
            period_id: p.period_id,
            events: p.events.len(),
        });
        for team in [p.home_team, p.away_team] {
            if !ds.teams.contains_key(&team) {
                violations.push(format!("{tag}: unknown team {}", team.0));
            }
        }
        if p.home_team == p.away_team {
            violations.push(format!("{tag}: home and away team coincide"));
        }
        let mut prev: Option<f64> = None;
        for (i, e) in p.events.iter().enumerate() {
            if !ds.taxonomy.contains(e.mark) {
                violations.push(format!("{tag} event {i}: mark {} out of range", e.mark.0));
                continue;
            }
            if e.zone.0 == 0 || e.zone.index() >= z {
                violations.push(format!("{tag} event {i}: zone {} out of range", e.zone.0));
                continue;
            }
            freq[e.mark.index()][e.zone.index()] += 1;
            if !(e.t >= 0.0) {
                violations.push(format!("{tag} event {i}: negative time {}", e.t));
            }
            if e.t > p.t_end {
                violations.push(format!(
                    "{tag} event {i}: time {} beyond horizon {}",
                    e.t, p.t_end
                ));
            }
            if let Some(pt) = prev {
                if e.t <= pt {
                    violations.push(format!("{tag} event {i}: time {} not after {}", e.t, pt));
                }
            }
            prev = Some(e.t);
            let expected = p.team_of(&ds.taxonomy, e.mark);
            if e.team != expected {
                violations.push(format!(
                    "{tag} event {i}: team {} disagrees with mark side (expected {})",
                    e.team.0, expected.0
                ));
            }
        }
    }
    ValidationReport {
        period_counts: counts,
        zone_mark_freq: freq,
        violations,
    }
}
