//! Association-rule screening of (source mark → target mark | zone) pairs.
//!
//! Each modelled event is treated as a transaction whose antecedents are the
//! distinct marks among its `W` in-period predecessors. Pairs are ranked per
//! zone by lift, the ratio between the rate at which a source precedes a
//! given target and the rate at which it precedes any event in that zone.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::event::{Dataset, MarkId, ZoneId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairCounts {
    pub n_marks: usize,
    pub n_zones: usize,
    pub window: usize,
    support: Vec<u64>,
    target_count: Vec<u64>,
}

impl PairCounts {
    #[inline]
    fn sidx(&self, source: usize, target: usize, zone: usize) -> usize {
        (source * self.n_marks + target) * self.n_zones + zone
    }

    /// Events of mark `target` in `zone` with `source` among their window.
    pub fn support(&self, source: MarkId, target: MarkId, zone: ZoneId) -> u64 {
        self.support[self.sidx(source.index(), target.index(), zone.index())]
    }

    pub fn target_count(&self, target: MarkId, zone: ZoneId) -> u64 {
        self.target_count[target.index() * self.n_zones + zone.index()]
    }

    /// Modelled events of each mark summed over zones.
    pub fn mark_totals(&self) -> Vec<u64> {
        (0..self.n_marks)
            .map(|m| (0..self.n_zones).map(|z| self.target_count[m * self.n_zones + z]).sum())
            .collect()
    }

    fn merge(&mut self, other: &PairCounts) {
        for (a, b) in self.support.iter_mut().zip(&other.support) {
            *a += b;
        }
        for (a, b) in self.target_count.iter_mut().zip(&other.target_count) {
            *a += b;
        }
    }
}

/// Count windowed co-occurrences. Predecessors never cross period
/// boundaries and the first event of a period is never a target.
pub fn count_pair_support(ds: &Dataset, window: usize) -> Result<PairCounts> {
    if window == 0 {
        return Err(invalid("screening window must be at least 1"));
    }
    let (m, z) = (ds.n_marks(), ds.zones);
    let empty = PairCounts {
        n_marks: m,
        n_zones: z,
        window,
        support: vec![0; m * m * z],
        target_count: vec![0; m * z],
    };
    let mut total = empty.clone();
    let mut seen = vec![usize::MAX; m];
    for p in &ds.periods {
        let mut local = empty.clone();
        for (i, e) in p.events.iter().enumerate().skip(1) {
            let (tgt, zone) = (e.mark.index(), e.zone.index());
            local.target_count[tgt * z + zone] += 1;
            for prev in &p.events[i.saturating_sub(window)..i] {
                let src = prev.mark.index();
                if seen[src] != i {
                    seen[src] = i;
                    let k = local.sidx(src, tgt, zone);
                    local.support[k] += 1;
                }
            }
        }
        seen.iter_mut().for_each(|s| *s = usize::MAX);
        total.merge(&local);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NScope {
    /// `N` pairs retained in each zone.
    Zone,
    /// `N` pairs retained over all zones.
    Global,
}

impl FromStr for NScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zone" => Ok(NScope::Zone),
            "global" => Ok(NScope::Global),
            _ => Err(invalid(format!("unknown N scope `{s}`"))),
        }
    }
}

impl std::fmt::Display for NScope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NScope::Zone => "zone",
            NScope::Global => "global",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub zone: ZoneId,
    pub source: MarkId,
    pub target: MarkId,
    pub support: u64,
    pub lift: f64,
}

/// Retained interactions, sorted by (zone, source, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub window: usize,
    pub n: usize,
    pub scope: NScope,
    pub n_marks: usize,
    pub n_zones: usize,
    /// Modelled event counts per mark in the screened data.
    pub mark_totals: Vec<u64>,
    pub rules: Vec<Rule>,
}

fn rank(a: &Rule, b: &Rule) -> Ordering {
    b.lift
        .total_cmp(&a.lift)
        .then(b.support.cmp(&a.support))
        .then((a.source, a.target).cmp(&(b.source, b.target)))
        .then(a.zone.cmp(&b.zone))
}

/// Keep the `n` highest-lift pairs (per zone or globally). Ties go to the
/// higher support, then to the lexicographically smaller (source, target).
pub fn select_rules(pc: &PairCounts, n: usize, scope: NScope) -> Result<RuleSet> {
    if n == 0 {
        return Err(invalid("rule threshold N must be at least 1"));
    }
    let (m, zn) = (pc.n_marks, pc.n_zones);
    let mut candidates: Vec<Vec<Rule>> = vec![Vec::new(); zn];
    for z in 0..zn {
        let zone = ZoneId::from_index(z);
        let total: u64 = (0..m).map(|t| pc.target_count[t * zn + z]).sum();
        for s in 0..m {
            let presence: u64 = (0..m).map(|t| pc.support[pc.sidx(s, t, z)]).sum();
            for t in 0..m {
                let sup = pc.support[pc.sidx(s, t, z)];
                if sup == 0 {
                    continue;
                }
                let tc = pc.target_count[t * zn + z];
                let lift = (sup as f64 * total as f64) / (tc as f64 * presence as f64);
                candidates[z].push(Rule {
                    zone,
                    source: MarkId::from_index(s),
                    target: MarkId::from_index(t),
                    support: sup,
                    lift,
                });
            }
        }
    }
    let mut rules: Vec<Rule> = match scope {
        NScope::Zone => candidates
            .into_iter()
            .flat_map(|mut c| {
                c.sort_by(rank);
                c.truncate(n);
                c
            })
            .collect(),
        NScope::Global => {
            let mut all: Vec<Rule> = candidates.into_iter().flatten().collect();
            all.sort_by(rank);
            all.truncate(n);
            all
        }
    };
    rules.sort_by_key(|r| (r.zone, r.source, r.target));
    Ok(RuleSet {
        window: pc.window,
        n,
        scope,
        n_marks: m,
        n_zones: zn,
        mark_totals: pc.mark_totals(),
        rules,
    })
}

impl RuleSet {
    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn contains(&self, zone: ZoneId, source: MarkId, target: MarkId) -> bool {
        self.rules
            .binary_search_by_key(&(zone, source, target), |r| (r.zone, r.source, r.target))
            .is_ok()
    }

    /// Audit table `zone,source_mark,target_mark,support,lift` preceded by
    /// `#` metadata lines. Reloads exactly through [`RuleSet::from_table`].
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let totals: Vec<String> = self.mark_totals.iter().map(u64::to_string).collect();
        let _ = writeln!(out, "# window={}", self.window);
        let _ = writeln!(out, "# n={}", self.n);
        let _ = writeln!(out, "# scope={}", self.scope);
        let _ = writeln!(out, "# marks={}", self.n_marks);
        let _ = writeln!(out, "# zones={}", self.n_zones);
        let _ = writeln!(out, "# mark_totals={}", totals.join(";"));
        out.push_str("zone,source_mark,target_mark,support,lift\n");
        for r in &self.rules {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.zone.0, r.source.0, r.target.0, r.support, r.lift
            );
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut meta = std::collections::HashMap::new();
        let mut rules = Vec::new();
        let mut header_seen = false;
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            let err = |msg: String| Error::Parse { line: k + 1, msg };
            if line.is_empty() {
                continue;
            }
            if let Some(kv) = line.strip_prefix('#') {
                if let Some((key, v)) = kv.trim().split_once('=') {
                    meta.insert(key.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if !header_seen {
                if line != "zone,source_mark,target_mark,support,lift" {
                    return Err(err(format!("unexpected header `{line}`")));
                }
                header_seen = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", f.len())));
            }
            let bad = |_| err(format!("malformed rule row `{line}`"));
            rules.push(Rule {
                zone: ZoneId(f[0].parse().map_err(bad)?),
                source: MarkId(f[1].parse().map_err(bad)?),
                target: MarkId(f[2].parse().map_err(bad)?),
                support: f[3].parse().map_err(bad)?,
                lift: f[4].parse().map_err(|_| err(format!("malformed lift `{}`", f[4])))?,
            });
        }
        let get = |key: &str| -> Result<&String> {
            meta.get(key)
                .ok_or_else(|| invalid(format!("rule table lacks `# {key}=` metadata")))
        };
        let num = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| invalid(format!("rule table metadata `{key}` is not a count")))
        };
        let mark_totals = get("mark_totals")?
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<u64>().map_err(|_| invalid("malformed mark_totals")))
            .collect::<Result<Vec<_>>>()?;
        let mut rs = RuleSet {
            window: num("window")?,
            n: num("n")?,
            scope: get("scope")?.parse()?,
            n_marks: num("marks")?,
            n_zones: num("zones")?,
            mark_totals,
            rules,
        };
        rs.rules.sort_by_key(|r| (r.zone, r.source, r.target));
        Ok(rs)
    }

    /// Number of distinct (source, target) pairs kept in `zone`.
    pub fn pairs_in_zone(&self, zone: ZoneId) -> usize {
        self.rules.iter().filter(|r| r.zone == zone).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::fixtures::toy;
    use crate::event::Taxonomy;

    // marks: 1 = Home_A (a), 2 = Home_B (b)
    fn abab() -> Dataset {
        toy(
            Taxonomy::paired(&["A", "B"]),
            3,
            &[(1, 1, vec![(0.0, 2, 1), (1.0, 2, 2), (2.0, 2, 1), (3.0, 2, 2)])],
        )
    }

    #[test]
    fn window_one_counts() {
        let pc = count_pair_support(&abab(), 1).unwrap();
        let z = ZoneId(2);
        assert_eq!(pc.support(MarkId(1), MarkId(2), z), 2);
        assert_eq!(pc.support(MarkId(2), MarkId(1), z), 1);
        assert_eq!(pc.support(MarkId(1), MarkId(1), z), 0);
        assert_eq!(pc.target_count(MarkId(2), z), 2);
        assert_eq!(pc.target_count(MarkId(1), z), 1);
        assert!(count_pair_support(&abab(), 0).is_err());
    }

    #[test]
    fn saturated_window_counts_full_history() {
        let pc = count_pair_support(&abab(), 100).unwrap();
        let z = ZoneId(2);
        // event 3 (a) has {a, b} before it, event 4 (b) has {a, b}, event 2 (b) has {a}.
        assert_eq!(pc.support(MarkId(1), MarkId(2), z), 2);
        assert_eq!(pc.support(MarkId(2), MarkId(2), z), 1);
        assert_eq!(pc.support(MarkId(1), MarkId(1), z), 1);
        assert_eq!(pc.support(MarkId(2), MarkId(1), z), 1);
    }

    #[test]
    fn single_event_period_has_no_support() {
        let ds = toy(Taxonomy::paired(&["A"]), 3, &[(1, 1, vec![(0.0, 1, 1)])]);
        let pc = count_pair_support(&ds, 3).unwrap();
        assert!(pc.support.iter().all(|&s| s == 0));
        let rs = select_rules(&pc, 5, NScope::Zone).unwrap();
        assert!(rs.is_empty());
    }

    fn manual_counts(entries: &[(usize, usize, usize, u64)], targets: &[(usize, usize, u64)]) -> PairCounts {
        let (m, z) = (3, 2);
        let mut pc = PairCounts {
            n_marks: m,
            n_zones: z,
            window: 1,
            support: vec![0; m * m * z],
            target_count: vec![0; m * z],
        };
        for &(s, t, zz, v) in entries {
            let k = pc.sidx(s, t, zz);
            pc.support[k] = v;
        }
        for &(t, zz, v) in targets {
            pc.target_count[t * z + zz] = v;
        }
        pc
    }

    /// Exhaustive ranking oracle: score every triple independently, then
    /// pick the best `n` per zone by repeatedly taking the maximum.
    fn brute_force(pc: &PairCounts, n: usize) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for z in 0..pc.n_zones {
            let total: f64 = (0..pc.n_marks).map(|t| pc.target_count[t * pc.n_zones + z] as f64).sum();
            let mut pool: Vec<(f64, u64, usize, usize)> = Vec::new();
            for s in 0..pc.n_marks {
                let pres: f64 = (0..pc.n_marks).map(|t| pc.support[pc.sidx(s, t, z)] as f64).sum();
                for t in 0..pc.n_marks {
                    let sup = pc.support[pc.sidx(s, t, z)];
                    if sup > 0 {
                        let tc = pc.target_count[t * pc.n_zones + z] as f64;
                        pool.push(((sup as f64 / tc) / (pres / total), sup, s, t));
                    }
                }
            }
            for _ in 0..n.min(pool.len()) {
                let mut best = 0;
                for k in 1..pool.len() {
                    let (a, b) = (pool[k], pool[best]);
                    let better = a.0 > b.0
                        || (a.0 == b.0 && (a.1 > b.1 || (a.1 == b.1 && (a.2, a.3) < (b.2, b.3))));
                    if better {
                        best = k;
                    }
                }
                let (_, _, s, t) = pool.remove(best);
                out.push((z, s, t));
            }
        }
        out.sort();
        out
    }

    #[test]
    fn five_pair_toy_matches_exhaustive_ranking() {
        let pc = manual_counts(
            &[(0, 1, 0, 4), (1, 0, 0, 2), (2, 2, 0, 3), (0, 0, 0, 1), (1, 2, 1, 5)],
            &[(0, 0, 6), (1, 0, 5), (2, 0, 7), (2, 1, 9), (1, 1, 2)],
        );
        let rs = select_rules(&pc, 2, NScope::Zone).unwrap();
        let got: Vec<_> = rs
            .rules
            .iter()
            .map(|r| (r.zone.index(), r.source.index(), r.target.index()))
            .collect();
        assert_eq!(got, brute_force(&pc, 2));
        assert_eq!(rs.pairs_in_zone(ZoneId(1)), 2);
        assert_eq!(rs.pairs_in_zone(ZoneId(2)), 1);
    }

    #[test]
    fn inactive_threshold_keeps_all_positive_pairs() {
        let pc = count_pair_support(&abab(), 2).unwrap();
        let positive = pc.support.iter().filter(|&&s| s > 0).count();
        let rs = select_rules(&pc, 1000, NScope::Zone).unwrap();
        assert_eq!(rs.len(), positive);
    }

    #[test]
    fn global_scope_caps_total() {
        let pc = manual_counts(
            &[(0, 1, 0, 4), (1, 0, 0, 2), (2, 2, 0, 3), (0, 0, 0, 1), (1, 2, 1, 5)],
            &[(0, 0, 6), (1, 0, 5), (2, 0, 7), (2, 1, 9), (1, 1, 2)],
        );
        let rs = select_rules(&pc, 3, NScope::Global).unwrap();
        assert_eq!(rs.len(), 3);
    }

    #[test]
    fn table_round_trip_is_exact() {
        let pc = count_pair_support(&abab(), 2).unwrap();
        let rs = select_rules(&pc, 3, NScope::Zone).unwrap();
        let text = rs.to_table();
        let back = RuleSet::from_table(&text).unwrap();
        assert_eq!(back, rs);
        assert_eq!(back.to_table(), text);
    }
}
