//! Softmax conversion probabilities for MβA.

use super::RuleIndex;
use crate::error::{invalid, Result};
use crate::num::Real;

/// Conversion probabilities of one rule row from rule logits `phi` and the
/// attempting team's ability logits `omega` (aligned with the row). The
/// `baseline` slot has logit zero whatever its inputs.
pub fn conversion_from_logits<F: Real>(phi: &[F], omega: &[F], baseline: usize) -> Result<Vec<F>> {
    if phi.is_empty() {
        return Err(invalid("conversion row has an empty support"));
    }
    if phi.len() != omega.len() || baseline >= phi.len() {
        return Err(invalid("logit blocks do not match the row support"));
    }
    Ok(softmax_with_baseline(phi, omega, baseline))
}

pub(super) fn softmax_with_baseline<F: Real>(phi: &[F], omega: &[F], baseline: usize) -> Vec<F> {
    let logits: Vec<F> = phi
        .iter()
        .zip(omega)
        .enumerate()
        .map(|(i, (&p, &o))| if i == baseline { F::zero() } else { p + o })
        .collect();
    let max = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let mut out: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: F = out.iter().copied().sum();
    out.iter_mut().for_each(|x| *x /= total);
    out
}

/// Gradient with respect to the logits given the gradient with respect to
/// the probabilities. The baseline entry is returned as zero.
pub(crate) fn softmax_backward<F: Real>(gamma: &[F], grad: &[F], baseline: usize) -> Vec<F> {
    let mean: F = gamma.iter().zip(grad).map(|(&g, &d)| g * d).sum();
    gamma
        .iter()
        .zip(grad)
        .enumerate()
        .map(|(i, (&g, &d))| if i == baseline { F::zero() } else { g * (d - mean) })
        .collect()
}

/// Absolute triple index of the zero-logit slot of each row: the last mark
/// when the row can reach it, otherwise the most frequent reachable mark.
pub(super) fn choose_baselines(index: &RuleIndex, mark_totals: &[u64]) -> Vec<usize> {
    let last = index.n_marks - 1;
    index
        .rows
        .iter()
        .map(|r| {
            if let Some(k) = (r.start..r.end).find(|&k| index.triples[k].2 == last) {
                return k;
            }
            (r.start..r.end)
                .max_by_key(|&k| {
                    let t = index.triples[k].2;
                    (mark_totals.get(t).copied().unwrap_or(0), t)
                })
                .expect("rule rows are non-empty")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn baseline_slot_ignores_inputs() {
        let g = conversion_from_logits(&[5.0, 0.3, -1.0], &[2.0, 0.1, 0.0], 0).unwrap();
        let e = [1.0f64, (0.4f64).exp(), (-1.0f64).exp()];
        let s: f64 = e.iter().sum();
        for (a, b) in g.iter().zip(e) {
            assert_relative_eq!(*a, b / s, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_categories() {
        let g = conversion_from_logits(&[2f64.ln(), 0.0], &[0.0, 0.0], 1).unwrap();
        assert_relative_eq!(g[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(g[1], 1.0 / 3.0, epsilon = 1e-15);
        let u = conversion_from_logits(&[0.0; 4], &[0.0; 4], 3).unwrap();
        assert!(u.iter().all(|&x| (x - 0.25f64).abs() < 1e-15));
        assert!(conversion_from_logits::<f64>(&[], &[], 0).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let phi = [0.0, 0.7, -0.4, 1.1];
        let omega = [0.0, 0.2, 0.5, -0.3];
        let up = [0.3, -1.2, 0.8, 2.0];
        let f = |phi: &[f64]| -> f64 {
            conversion_from_logits(phi, &omega, 0)
                .unwrap()
                .iter()
                .zip(up)
                .map(|(g, u)| g * u)
                .sum()
        };
        let gamma = conversion_from_logits(&phi, &omega, 0).unwrap();
        let grad = softmax_backward(&gamma, &up, 0);
        for i in 1..4 {
            let mut a = phi;
            let mut b = phi;
            a[i] += 1e-6;
            b[i] -= 1e-6;
            assert_relative_eq!(grad[i], (f(&a) - f(&b)) / 2e-6, epsilon = 1e-7);
        }
    }

    #[test]
    fn baselines_prefer_last_mark_then_frequency() {
        let idx = RuleIndex::full(3, 1);
        let b = choose_baselines(&idx, &[5, 9, 1]);
        assert_eq!(b, vec![2, 5, 8]);
    }

    #[test]
    fn baseline_falls_back_to_most_frequent() {
        use crate::event::{MarkId, ZoneId};
        use crate::screening::{NScope, Rule, RuleSet};
        let rule = |t| Rule {
            zone: ZoneId(1),
            source: MarkId(1),
            target: MarkId(t),
            support: 1,
            lift: 1.0,
        };
        let rs = RuleSet {
            window: 3,
            n: 3,
            scope: NScope::Global,
            n_marks: 4,
            n_zones: 1,
            mark_totals: vec![3, 7, 7, 100],
            rules: vec![rule(1), rule(2), rule(3)],
        };
        let idx = RuleIndex::new(&rs, 4, 1).unwrap();
        // marks 2 and 3 tie on frequency; the larger id wins
        assert_eq!(choose_baselines(&idx, &rs.mark_totals), vec![2]);
    }
}
