//! Home/away tying of zone-specific background probabilities:
//! `δ[m | z] = δ[m + M/2 | Z + 1 − z]`.

use super::ExcitationParams;
use crate::error::{invalid, Result};
use crate::event::Taxonomy;
use crate::num::Real;

/// Maps free background blocks to the full `Z × M` table.
///
/// Rows `z < Z − 1 − z` (zero-based) are free simplexes over all marks and
/// fix their mirror rows by swapping the home and away halves. A middle row
/// (odd `Z`) is `(v, v)` where `2v` is a free simplex over `M/2` marks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HomeAwayTying {
    pub n_marks: usize,
    pub n_zones: usize,
}

/// One free simplex: zone row it drives and its length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeBlock {
    pub zone: usize,
    pub len: usize,
    pub middle: bool,
}

impl HomeAwayTying {
    pub fn new(taxonomy: &Taxonomy, n_zones: usize) -> Result<Self> {
        if !taxonomy.is_paired() {
            return Err(invalid("home/away tying needs a paired Home_/Away_ taxonomy"));
        }
        if n_zones == 0 {
            return Err(invalid("home/away tying needs at least one zone"));
        }
        Ok(HomeAwayTying {
            n_marks: taxonomy.len(),
            n_zones,
        })
    }

    fn half(&self) -> usize {
        self.n_marks / 2
    }

    pub fn blocks(&self) -> Vec<FreeBlock> {
        let z = self.n_zones;
        (0..z)
            .filter(|&r| r <= z - 1 - r)
            .map(|r| {
                let middle = r == z - 1 - r;
                FreeBlock {
                    zone: r,
                    len: if middle { self.half() } else { self.n_marks },
                    middle,
                }
            })
            .collect()
    }

    pub fn n_free_values(&self) -> usize {
        self.blocks().iter().map(|b| b.len).sum()
    }

    /// Full zone-major table from the concatenated free blocks.
    pub fn expand<F: Real>(&self, free: &[F]) -> Vec<F> {
        let (m, h, nz) = (self.n_marks, self.half(), self.n_zones);
        let mut out = vec![F::zero(); nz * m];
        let mut at = 0;
        for b in self.blocks() {
            let v = &free[at..at + b.len];
            at += b.len;
            let z = b.zone;
            if b.middle {
                let half = F::of(0.5);
                for i in 0..h {
                    out[z * m + i] = v[i] * half;
                    out[z * m + i + h] = out[z * m + i];
                }
            } else {
                let mirror = nz - 1 - z;
                out[z * m..(z + 1) * m].copy_from_slice(v);
                for i in 0..m {
                    out[mirror * m + swap(i, h)] = v[i];
                }
            }
        }
        out
    }

    /// Gradient with respect to the free blocks given the gradient with
    /// respect to the full table.
    pub fn reduce_grad<F: Real>(&self, full: &[F]) -> Vec<F> {
        let (m, h, nz) = (self.n_marks, self.half(), self.n_zones);
        let mut out = Vec::with_capacity(self.n_free_values());
        for b in self.blocks() {
            let z = b.zone;
            if b.middle {
                for i in 0..h {
                    out.push((full[z * m + i] + full[z * m + i + h]) * F::of(0.5));
                }
            } else {
                let mirror = nz - 1 - z;
                for i in 0..m {
                    out.push(full[z * m + i] + full[mirror * m + swap(i, h)]);
                }
            }
        }
        out
    }

    /// Free blocks of the tied table closest to `full`, by averaging the
    /// entries that the constraint identifies.
    pub fn project<F: Real>(&self, full: &[F]) -> Vec<F> {
        let (m, h, nz) = (self.n_marks, self.half(), self.n_zones);
        let half = F::of(0.5);
        let mut out = Vec::with_capacity(self.n_free_values());
        for b in self.blocks() {
            let z = b.zone;
            if b.middle {
                for i in 0..h {
                    out.push(full[z * m + i] + full[z * m + i + h]);
                }
            } else {
                let mirror = nz - 1 - z;
                for i in 0..m {
                    out.push((full[z * m + i] + full[mirror * m + swap(i, h)]) * half);
                }
            }
        }
        out
    }

    /// Whether a full table satisfies the tying exactly.
    pub fn holds<F: Real>(&self, full: &[F]) -> bool {
        let (m, h, nz) = (self.n_marks, self.half(), self.n_zones);
        (0..nz).all(|z| (0..m).all(|i| full[z * m + i] == full[(nz - 1 - z) * m + swap(i, h)]))
    }
}

#[inline]
fn swap(i: usize, h: usize) -> usize {
    if i < h {
        i + h
    } else {
        i - h
    }
}

/// Background table of `p` projected onto the home/away constraint.
pub fn apply_home_away_constraint<F: Real>(
    tying: &HomeAwayTying,
    p: &ExcitationParams<F>,
) -> Result<ExcitationParams<F>> {
    if p.delta.len() != tying.n_marks * tying.n_zones {
        return Err(invalid("tying needs a zone-specific background table"));
    }
    let mut out = p.clone();
    out.delta = tying.expand(&tying.project(&p.delta));
    Ok(out)
}
