use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Dataset, Event, GamePeriod, MarkId, Side, Taxonomy, TeamId, ZoneId};
use crate::error::{Error, Result};

const HEADER: &str = "i,id,period,team_id,time,zone,mark";

/// Offset added to the k-th event of a group sharing one timestamp.
pub const TIE_JITTER: f64 = 1e-3;

/// Team names and game schedule accompanying an event file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    #[serde(default)]
    pub teams: BTreeMap<u32, String>,
    #[serde(default)]
    pub games: Vec<SidecarGame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarGame {
    pub id: u64,
    pub home_team: u32,
    pub away_team: u32,
    /// Optional observation horizon per period id.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub t_end: BTreeMap<u32, f64>,
}

impl Sidecar {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Sidecar that reproduces the dataset's team names, schedule and horizons.
    pub fn from_dataset(ds: &Dataset) -> Self {
        let teams = ds.teams.iter().map(|(k, v)| (k.0, v.clone())).collect();
        let mut games: Vec<SidecarGame> = Vec::new();
        for p in &ds.periods {
            if games.last().map(|g| g.id) != Some(p.game_id) {
                games.push(SidecarGame {
                    id: p.game_id,
                    home_team: p.home_team.0,
                    away_team: p.away_team.0,
                    t_end: BTreeMap::new(),
                });
            }
            games.last_mut().unwrap().t_end.insert(p.period_id, p.t_end);
        }
        Sidecar { teams, games }
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parse an event table with the 30-mark football taxonomy and three zones.
pub fn parse_events(csv_text: &str) -> Result<Dataset> {
    parse_events_with(csv_text, Taxonomy::football(), 3, None)
}

struct RawRow {
    line: usize,
    t: f64,
    zone: ZoneId,
    mark: MarkId,
    team: TeamId,
}

pub fn parse_events_with(
    csv_text: &str,
    taxonomy: Taxonomy,
    zones: usize,
    sidecar: Option<&Sidecar>,
) -> Result<Dataset> {
    let mut lines = csv_text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((hline, header)) = lines.next() else {
        return Err(perr(1, "missing header row"));
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.join(",") != HEADER {
        return Err(perr(hline, format!("expected header `{HEADER}`, found `{header}`")));
    }

    let m_max = taxonomy.len();
    let mut order: Vec<(u64, u32)> = Vec::new();
    let mut groups: HashMap<(u64, u32), Vec<RawRow>> = HashMap::new();
    for (line, text) in lines {
        let f: Vec<&str> = text.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(perr(line, format!("expected 7 fields, found {}", f.len())));
        }
        let num = |k: usize, name: &str| -> Result<f64> {
            f[k].parse::<f64>()
                .map_err(|_| perr(line, format!("field `{name}` is not numeric: `{}`", f[k])))
        };
        let int = |k: usize, name: &str| -> Result<u64> {
            f[k].parse::<u64>()
                .map_err(|_| perr(line, format!("field `{name}` is not an integer: `{}`", f[k])))
        };
        int(0, "i")?;
        let game = int(1, "id")?;
        let period = int(2, "period")? as u32;
        let team = TeamId(int(3, "team_id")? as u32);
        let t = num(4, "time")?;
        let zone = int(5, "zone")?;
        let mark = int(6, "mark")?;
        if !t.is_finite() || t < 0.0 {
            return Err(perr(line, format!("time must be a non-negative number, found {t}")));
        }
        if zone == 0 || zone as usize > zones {
            return Err(perr(line, format!("zone {zone} outside 1..={zones}")));
        }
        if mark == 0 || mark as usize > m_max {
            return Err(perr(line, format!("mark {mark} outside 1..={m_max}")));
        }
        let key = (game, period);
        let rows = groups.entry(key).or_insert_with(|| {
            order.push(key);
            Vec::new()
        });
        if let Some(prev) = rows.last() {
            if t < prev.t {
                return Err(perr(
                    line,
                    format!("time {t} decreases from {} within game {game} period {period}", prev.t),
                ));
            }
        }
        rows.push(RawRow {
            line,
            t,
            zone: ZoneId(zone as u8),
            mark: MarkId(mark as u16),
            team,
        });
    }

    let schedule: HashMap<u64, &SidecarGame> = sidecar
        .map(|s| s.games.iter().map(|g| (g.id, g)).collect())
        .unwrap_or_default();
    // Infer home/away teams per game from the mark sides when no schedule is given.
    let mut inferred: HashMap<u64, (Option<TeamId>, Option<TeamId>)> = HashMap::new();
    for key in &order {
        let entry = inferred.entry(key.0).or_default();
        for r in &groups[key] {
            match taxonomy.side(r.mark) {
                Side::Home => {
                    entry.0.get_or_insert(r.team);
                }
                Side::Away => {
                    entry.1.get_or_insert(r.team);
                }
            }
        }
    }

    let mut teams = BTreeMap::new();
    let mut periods = Vec::with_capacity(order.len());
    for key in order {
        let rows = groups.remove(&key).unwrap();
        let first_line = rows.first().map_or(0, |r| r.line);
        let (home, away, t_end) = match schedule.get(&key.0) {
            Some(g) => (
                TeamId(g.home_team),
                TeamId(g.away_team),
                g.t_end.get(&key.1).copied(),
            ),
            None => match inferred[&key.0] {
                (Some(h), Some(a)) => (h, a, None),
                _ => {
                    return Err(perr(
                        first_line,
                        format!(
                            "cannot infer home and away teams of game {}; supply a sidecar",
                            key.0
                        ),
                    ))
                }
            },
        };
        let events = jitter_ties(&rows)?;
        let last = events.last().map_or(0.0, |e| e.t);
        for t in [home, away] {
            let name = sidecar
                .and_then(|s| s.teams.get(&t.0).cloned())
                .unwrap_or_else(|| format!("team_{}", t.0));
            teams.insert(t, name);
        }
        periods.push(GamePeriod {
            game_id: key.0,
            period_id: key.1,
            home_team: home,
            away_team: away,
            events,
            t_end: t_end.unwrap_or(last).max(last),
        });
    }
    if let Some(s) = sidecar {
        for (&id, name) in &s.teams {
            teams.insert(TeamId(id), name.clone());
        }
    }
    Ok(Dataset {
        taxonomy,
        zones,
        teams,
        periods,
    })
}

/// Spread tied timestamps: the k-th event (k = 0, 1, ...) of a tie group
/// at `t` moves to `t + k * TIE_JITTER`, preserving file order.
fn jitter_ties(rows: &[RawRow]) -> Result<Vec<Event>> {
    let mut out: Vec<Event> = Vec::with_capacity(rows.len());
    let mut k = 0usize;
    for (i, r) in rows.iter().enumerate() {
        k = if i > 0 && r.t == rows[i - 1].t { k + 1 } else { 0 };
        let t = r.t + k as f64 * TIE_JITTER;
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(perr(
                    r.line,
                    format!("tie jitter cannot separate time {} from {}", r.t, prev.t),
                ));
            }
        }
        out.push(Event {
            t,
            zone: r.zone,
            mark: r.mark,
            team: r.team,
        });
    }
    Ok(out)
}

/// Write the dataset back in the ingestion format. Times use the shortest
/// representation that reparses to the same `f64`.
pub fn serialize_events(ds: &Dataset) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    let mut i = 1usize;
    for p in &ds.periods {
        for e in &p.events {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{}",
                p.game_id, p.period_id, e.team.0, e.t, e.zone.0, e.mark.0
            );
            i += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

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

    #[test]
    fn parses_snapshot() {
        let ds = parse_events(SNAPSHOT).unwrap();
        assert_eq!(ds.periods.len(), 1);
        let p = &ds.periods[0];
        assert_eq!(p.events.len(), 8);
        assert_eq!(p.n_modelled(), 7);
        let marks: Vec<u16> = p.events.iter().map(|e| e.mark.0).collect();
        assert_eq!(marks, vec![18, 19, 8, 16, 18, 18, 19, 12]);
        assert_eq!(p.home_team, TeamId(2));
        assert_eq!(p.away_team, TeamId(1));
        assert_eq!(p.t_end, 19.0);
        assert!(crate::event::validate(&ds).is_valid());
    }

    #[test]
    fn empty_body_gives_no_periods() {
        let ds = parse_events("i,id,period,team_id,time,zone,mark\n").unwrap();
        assert!(ds.periods.is_empty());
        assert!(parse_events("").is_err());
    }

    #[test]
    fn ties_are_jittered_in_order() {
        let text = "i,id,period,team_id,time,zone,mark
1,7,1,1,0,2,3
2,7,1,1,5,2,3
3,7,1,2,5,2,18
4,7,1,2,5,1,19
5,7,1,1,6,1,4
";
        let ds = parse_events(text).unwrap();
        let ts: Vec<f64> = ds.periods[0].events.iter().map(|e| e.t).collect();
        assert_eq!(ts, vec![0.0, 5.0, 5.0 + TIE_JITTER, 5.0 + 2.0 * TIE_JITTER, 6.0]);
        let marks: Vec<u16> = ds.periods[0].events.iter().map(|e| e.mark.0).collect();
        assert_eq!(marks, vec![3, 3, 18, 19, 4]);
        let again = parse_events(&serialize_events(&ds)).unwrap();
        assert_eq!(again, ds);
    }

    #[test]
    fn reports_bad_rows_with_line_numbers() {
        let bad_mark = "i,id,period,team_id,time,zone,mark\n1,1,1,1,0,2,31\n";
        match parse_events(bad_mark) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let bad_zone = "i,id,period,team_id,time,zone,mark\n1,1,1,1,0,2,3\n2,1,1,1,1,4,18\n";
        assert!(matches!(parse_events(bad_zone), Err(Error::Parse { line: 3, .. })));
        let decreasing = "i,id,period,team_id,time,zone,mark\n1,1,1,1,5,2,3\n2,1,1,2,4,2,18\n";
        assert!(matches!(parse_events(decreasing), Err(Error::Parse { line: 3, .. })));
        let malformed = "i,id,period,team_id,time,zone,mark\n1,1,1,1,x,2,3\n";
        assert!(matches!(parse_events(malformed), Err(Error::Parse { line: 2, .. })));
        let short = "i,id,period,team_id,time,zone,mark\n1,1,1,1,2,3\n";
        assert!(matches!(parse_events(short), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn sidecar_supplies_teams_and_horizon() {
        let sc = Sidecar::from_json(
            r#"{"teams": {"1": "Arsenal", "2": "Aston Villa"},
                "games": [{"id": 101, "home_team": 2, "away_team": 1, "t_end": {"1": 2800.0}}]}"#,
        )
        .unwrap();
        let ds = parse_events_with(SNAPSHOT, Taxonomy::football(), 3, Some(&sc)).unwrap();
        assert_eq!(ds.teams[&TeamId(1)], "Arsenal");
        assert_eq!(ds.periods[0].t_end, 2800.0);
        let back = Sidecar::from_json(&Sidecar::from_dataset(&ds).to_json().unwrap()).unwrap();
        let again =
            parse_events_with(&serialize_events(&ds), Taxonomy::football(), 3, Some(&back)).unwrap();
        assert_eq!(again, ds);
    }

    fn dataset_strategy() -> impl Strategy<Value = Dataset> {
        let period = prop::collection::vec((0.001f64..50.0, 1u8..=3, 1u16..=30), 1..20);
        prop::collection::vec(period, 0..4).prop_map(|ps| {
            let tx = Taxonomy::football();
            let periods: Vec<_> = ps
                .into_iter()
                .enumerate()
                .map(|(k, evs)| {
                    let mut t = 0.0;
                    let evs: Vec<(f64, u8, u16)> = evs
                        .into_iter()
                        .map(|(dt, z, m)| {
                            t += dt;
                            (t, z, m)
                        })
                        .collect();
                    (k as u64 / 2 + 1, k as u32 % 2 + 1, evs)
                })
                .collect();
            crate::event::fixtures::toy(tx, 3, &periods)
        })
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(ds in dataset_strategy()) {
            let sc = Sidecar::from_dataset(&ds);
            let back = parse_events_with(&serialize_events(&ds), Taxonomy::football(), 3, Some(&sc)).unwrap();
            prop_assert_eq!(back, ds);
        }
    }
}
