//! Conditional mark distributions.
//!
//! The excitation families share one pmf shape: a background probability
//! plus exponentially decaying contributions from earlier events, each
//! routed to a target mark by a conversion probability. They differ in how
//! decay rates, background and conversion probabilities are indexed:
//!
//! | family | decay          | background | conversion                     |
//! |--------|----------------|------------|--------------------------------|
//! | Sβ     | one scalar     | global     | per source mark                |
//! | Vβ     | per source     | global     | per source mark                |
//! | Mβ     | per rule       | per zone   | per (source, zone), over rules |
//! | MβA    | per rule       | per zone   | softmax of rule and team logits|
//!
//! Mβ/MβA only see the `W` most recent events and the retained rules of a
//! [`RuleSet`](crate::screening::RuleSet); other pairs contribute nothing.

mod ability;
mod baselines;
mod excitation;
mod tying;

pub use ability::conversion_from_logits;
pub(crate) use ability::softmax_backward;
pub use baselines::{
    fomc_counts, fomc_log_pmf, msthp_counts, msthp_event_log_lik, msthp_log_lik, FomcParams,
    MsthpCounts, MsthpParams,
};
pub use excitation::{
    branching_probabilities, excitation_weights, mark_log_pmf, mark_pmf, ExcitationParams,
    MarkLogPmf, Term, Weights,
};
pub use tying::{apply_home_away_constraint, FreeBlock, HomeAwayTying};

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::event::{Dataset, GamePeriod, MarkId, Side, Taxonomy, ZoneId};
use crate::screening::RuleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    SBeta,
    VBeta,
    MBeta,
    MBetaA,
    Fomc,
    Msthp,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::SBeta,
        Family::VBeta,
        Family::MBeta,
        Family::MBetaA,
        Family::Fomc,
        Family::Msthp,
    ];

    pub fn is_excitation(self) -> bool {
        matches!(self, Family::SBeta | Family::VBeta | Family::MBeta | Family::MBetaA)
    }

    /// Screened families with zone-specific background and rule-indexed decay.
    pub fn is_matrix(self) -> bool {
        matches!(self, Family::MBeta | Family::MBetaA)
    }

    pub fn abbreviation(self) -> &'static str {
        match self {
            Family::SBeta => "Sβ",
            Family::VBeta => "Vβ",
            Family::MBeta => "Mβ",
            Family::MBetaA => "MβA",
            Family::Fomc => "FOMC",
            Family::Msthp => "MSTHP",
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Family::SBeta => "sbeta",
            Family::VBeta => "vbeta",
            Family::MBeta => "mbeta",
            Family::MBetaA => "mbetaa",
            Family::Fomc => "fomc",
            Family::Msthp => "msthp",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Family::SBeta => "Scalar beta",
            Family::VBeta => "Vector beta",
            Family::MBeta => "Matrix beta",
            Family::MBetaA => "Matrix beta with abilities",
            Family::Fomc => "First order Markov chain (Baseline)",
            Family::Msthp => "Homogeneous Poisson process (Baseline)",
        }
    }
}

impl FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.cli_name() == s.to_ascii_lowercase() || f.abbreviation() == s)
            .ok_or_else(|| invalid(format!("unknown model family `{s}`")))
    }
}

/// Retained (zone, source, target) triples grouped in rows by (zone, source).
#[derive(Debug, Clone, PartialEq)]
pub struct RuleIndex {
    pub n_marks: usize,
    pub n_zones: usize,
    /// `(zone, source, target)` zero-based, sorted.
    pub triples: Vec<(usize, usize, usize)>,
    pub rows: Vec<RuleRow>,
    row_of: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleRow {
    pub zone: usize,
    pub source: usize,
    /// Contiguous range of triple indices.
    pub start: usize,
    pub end: usize,
}

impl RuleRow {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

impl RuleIndex {
    pub fn new(rules: &RuleSet, n_marks: usize, n_zones: usize) -> Result<Self> {
        let mut triples = Vec::with_capacity(rules.len());
        for r in &rules.rules {
            if r.source.index() >= n_marks || r.target.index() >= n_marks || r.zone.index() >= n_zones {
                return Err(invalid(format!(
                    "rule ({}, {} -> {}) outside a model with {n_marks} marks and {n_zones} zones",
                    r.zone.0, r.source.0, r.target.0
                )));
            }
            triples.push((r.zone.index(), r.source.index(), r.target.index()));
        }
        triples.sort_unstable();
        triples.dedup();
        let mut rows: Vec<RuleRow> = Vec::new();
        let mut row_of = vec![None; n_zones * n_marks];
        for (k, &(z, s, _)) in triples.iter().enumerate() {
            match rows.last_mut() {
                Some(row) if row.zone == z && row.source == s => row.end = k + 1,
                _ => {
                    row_of[z * n_marks + s] = Some(rows.len());
                    rows.push(RuleRow {
                        zone: z,
                        source: s,
                        start: k,
                        end: k + 1,
                    });
                }
            }
        }
        Ok(RuleIndex {
            n_marks,
            n_zones,
            triples,
            rows,
            row_of,
        })
    }

    /// Every (zone, source, target) triple, i.e. no screening.
    pub fn full(n_marks: usize, n_zones: usize) -> Self {
        let mut rules = Vec::new();
        for z in 0..n_zones {
            for s in 0..n_marks {
                for t in 0..n_marks {
                    rules.push(crate::screening::Rule {
                        zone: ZoneId::from_index(z),
                        source: MarkId::from_index(s),
                        target: MarkId::from_index(t),
                        support: 1,
                        lift: 1.0,
                    });
                }
            }
        }
        let rs = RuleSet {
            window: usize::MAX,
            n: rules.len(),
            scope: crate::screening::NScope::Global,
            n_marks,
            n_zones,
            mark_totals: vec![0; n_marks],
            rules,
        };
        Self::new(&rs, n_marks, n_zones).expect("full rule index is consistent")
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    #[inline]
    pub fn row(&self, zone: usize, source: usize) -> Option<&RuleRow> {
        self.row_of[zone * self.n_marks + source].map(|r| &self.rows[r])
    }

    pub fn row_index(&self, zone: usize, source: usize) -> Option<usize> {
        self.row_of[zone * self.n_marks + source]
    }
}

/// Dense team indices of the two sides of a period.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodTeams {
    pub home: usize,
    pub away: usize,
}

impl PeriodTeams {
    pub fn of(ds: &Dataset, p: &GamePeriod) -> Result<Self> {
        let idx = |t| {
            ds.team_index(t)
                .ok_or_else(|| invalid(format!("team {} missing from the dataset", t.0)))
        };
        Ok(PeriodTeams {
            home: idx(p.home_team)?,
            away: idx(p.away_team)?,
        })
    }
}

/// Parameter-independent description of an excitation mark model.
#[derive(Debug, Clone)]
pub struct ExcitationModel {
    pub family: Family,
    pub n_marks: usize,
    pub n_zones: usize,
    pub n_teams: usize,
    /// Number of most recent events that can excite (Mβ/MβA).
    pub window: Option<usize>,
    pub rules: Option<Arc<RuleIndex>>,
    /// Triple holding the zero logit of each rule row (MβA).
    pub baseline: Vec<usize>,
    /// Team whose abilities are pinned to zero (MβA).
    pub reference_team: usize,
    /// Side of the team attempting each mark.
    pub sides: Vec<Side>,
}

impl ExcitationModel {
    /// Sβ or Vβ over the whole history.
    pub fn full_history(family: Family, taxonomy: &Taxonomy, n_zones: usize) -> Result<Self> {
        if !matches!(family, Family::SBeta | Family::VBeta) {
            return Err(invalid(format!("{} needs screening rules", family.abbreviation())));
        }
        Ok(ExcitationModel {
            family,
            n_marks: taxonomy.len(),
            n_zones,
            n_teams: 0,
            window: None,
            rules: None,
            baseline: Vec::new(),
            reference_team: 0,
            sides: sides(taxonomy),
        })
    }

    /// Mβ or MβA restricted to screened rules and a `window` of predecessors.
    pub fn screened(
        family: Family,
        taxonomy: &Taxonomy,
        n_zones: usize,
        rules: &RuleSet,
        n_teams: usize,
        reference_team: usize,
    ) -> Result<Self> {
        if !family.is_matrix() {
            return Err(invalid(format!("{} does not use screening rules", family.abbreviation())));
        }
        if family == Family::MBetaA && reference_team >= n_teams {
            return Err(invalid("reference team index outside the team list"));
        }
        let m = taxonomy.len();
        let index = RuleIndex::new(rules, m, n_zones)?;
        let baseline = ability::choose_baselines(&index, &rules.mark_totals);
        Ok(ExcitationModel {
            family,
            n_marks: m,
            n_zones,
            n_teams,
            window: Some(rules.window.max(1)),
            rules: Some(Arc::new(index)),
            baseline,
            reference_team,
            sides: sides(taxonomy),
        })
    }

    pub fn rule_index(&self) -> Option<&RuleIndex> {
        self.rules.as_deref()
    }

    pub fn n_rules(&self) -> usize {
        self.rules.as_ref().map_or(0, |r| r.len())
    }

    /// Team attempting a conversion into `target`.
    #[inline]
    pub fn team_for(&self, target: usize, teams: PeriodTeams) -> usize {
        match self.sides[target] {
            Side::Home => teams.home,
            Side::Away => teams.away,
        }
    }
}

fn sides(tx: &Taxonomy) -> Vec<Side> {
    (0..tx.len()).map(|m| tx.side(MarkId::from_index(m))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.cli_name().parse::<Family>().unwrap(), f);
            assert_eq!(f.abbreviation().parse::<Family>().unwrap(), f);
        }
        assert!("nope".parse::<Family>().is_err());
    }

    #[test]
    fn full_rule_index_rows_are_contiguous() {
        let idx = RuleIndex::full(3, 2);
        assert_eq!(idx.len(), 18);
        assert_eq!(idx.rows.len(), 6);
        let row = idx.row(1, 2).unwrap();
        assert_eq!((row.start, row.end), (15, 18));
        for k in row.start..row.end {
            assert_eq!((idx.triples[k].0, idx.triples[k].1), (1, 2));
        }
    }
}
