use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1-based mark identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MarkId(pub u16);

impl MarkId {
    /// Zero-based index into per-mark tables.
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        MarkId(i as u16 + 1)
    }
}

/// 1-based zone identifier. Zone 1 is the home defensive third.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ZoneId(pub u8);

impl ZoneId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn from_index(i: usize) -> Self {
        ZoneId(i as u8 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TeamId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Home,
    Away,
}

/// Ordered list of mark labels. The first half of the marks belong to the
/// home team and the second half are their away counterparts, so the away
/// counterpart of home mark `m` is `m + M/2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    labels: Vec<String>,
}

/// Composite event types tracked for each team.
pub const FOOTBALL_EVENTS: [&str; 15] = [
    "Win",
    "Dribble",
    "Pass_S",
    "Pass_U",
    "Shot",
    "Keeper",
    "Save",
    "Clear",
    "Lose",
    "Goal",
    "Foul",
    "Out_Throw",
    "Out_GK",
    "Out_Corner",
    "Pass_O",
];

impl Taxonomy {
    /// The 30-mark football taxonomy (`Home_Win` = 1 … `Away_Pass_O` = 30).
    pub fn football() -> Self {
        Self::paired(&FOOTBALL_EVENTS)
    }

    /// Build a home/away paired taxonomy from bare event names.
    pub fn paired(events: &[&str]) -> Self {
        let labels = ["Home", "Away"]
            .iter()
            .flat_map(|side| events.iter().map(move |e| format!("{side}_{e}")))
            .collect();
        Taxonomy { labels }
    }

    /// Arbitrary labels, e.g. for a reloaded dataset.
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("empty taxonomy".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate mark label {l}")));
            }
        }
        Ok(Taxonomy { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, m: MarkId) -> &str {
        &self.labels[m.index()]
    }

    pub fn id_of(&self, label: &str) -> Option<MarkId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(MarkId::from_index)
    }

    pub fn contains(&self, m: MarkId) -> bool {
        m.0 >= 1 && (m.0 as usize) <= self.labels.len()
    }

    /// Whether marks pair up as home/away counterparts.
    pub fn is_paired(&self) -> bool {
        let n = self.labels.len();
        n % 2 == 0
            && (0..n / 2).all(|i| {
                match (
                    self.labels[i].strip_prefix("Home_"),
                    self.labels[i + n / 2].strip_prefix("Away_"),
                ) {
                    (Some(h), Some(a)) => h == a,
                    _ => false,
                }
            })
    }

    pub fn side(&self, m: MarkId) -> Side {
        if m.index() < self.labels.len() / 2 {
            Side::Home
        } else {
            Side::Away
        }
    }

    /// The same event type for the other team.
    pub fn counterpart(&self, m: MarkId) -> MarkId {
        let half = self.labels.len() / 2;
        let i = m.index();
        MarkId::from_index(if i < half { i + half } else { i - half })
    }
}

/// Map a normalised pitch coordinate to one of three equal-length zones.
/// Boundary points belong to the higher zone; `y` does not matter.
pub fn zone_of(x: f64, _y: f64) -> Result<ZoneId> {
    if !(0.0..=100.0).contains(&x) || x.is_nan() {
        return Err(Error::OutOfRange {
            what: "pitch x coordinate",
            value: x.to_string(),
        });
    }
    let z = if x < 100.0 / 3.0 {
        1
    } else if x < 200.0 / 3.0 {
        2
    } else {
        3
    };
    Ok(ZoneId(z))
}
