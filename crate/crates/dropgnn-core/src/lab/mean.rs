//! Mean-aggregation separability: the single-index separator for equal-size
//! multisets, and the counterexample family where 0/1-dropout analysis is
//! provably blind.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A threshold test `step(mean - tau)` together with the dropout
/// probability making it informative.
#[derive(Clone, Debug)]
pub struct MeanSeparator {
    pub p: f64,
    pub tau: f64,
    /// 1 or 2: which input multiset shows `mean >= tau` more often.
    pub favored: u8,
    /// P(mean >= tau | favored) - P(mean >= tau | other), enumerated exactly
    /// over all dropout subsets.
    pub exact_gap: f64,
    /// The closed-form lower bound the construction guarantees.
    pub guaranteed_gap: f64,
}

#[derive(Clone, Debug)]
pub enum SeparatorOutcome {
    Separator(MeanSeparator),
    /// Equal means with different sizes: beyond the single-dropout
    /// guarantee (see the counterexample), legitimately unseparated.
    Unseparated,
}

/// Enumeration guard.
const MAX_SET: usize = 25;

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Exact `P(mean of survivors >= tau)` over all dropout subsets of `s`,
/// the empty survivor set contributing mean 0.
fn prob_mean_at_least(s: &[f64], p: f64, tau: f64) -> f64 {
    let n = s.len();
    let mut total = 0.0;
    for bits in 0u32..1 << n {
        let survivors: Vec<f64> = (0..n)
            .filter(|&i| bits >> i & 1 == 0)
            .map(|i| s[i])
            .collect();
        if mean(&survivors) >= tau {
            let k = n - survivors.len();
            total += libm::pow(p, k as f64) * libm::pow(1.0 - p, (n - k) as f64);
        }
    }
    total
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Finds a `step(mean - tau)` separator for two feature multisets.
///
/// Distinct means always separate (any set sizes): `tau` sits between the
/// means and `p = 1/(2 gamma)` keeps the 0-dropout dominant. Equal means
/// with equal sizes separate through the smallest sorted index where the
/// multisets differ: `tau` sits between the leave-one-out means and
/// `p = 1/(2 gamma^2)` suppresses multi-dropouts; the exact single-run gap
/// is then at least `3/(16 gamma^2)`. Equal means with different sizes are
/// reported as [`SeparatorOutcome::Unseparated`].
pub fn mean_separator(s1: &[f64], s2: &[f64]) -> Result<SeparatorOutcome> {
    if s1.is_empty() || s2.is_empty() {
        return Err(Error::InvalidArgument("empty multiset".into()));
    }
    if s1.len().max(s2.len()) > MAX_SET {
        return Err(Error::GuardExceeded("multisets too large to enumerate".into()));
    }
    let (a, b) = (sorted(s1), sorted(s2));
    if a == b {
        return Err(Error::InvalidArgument("multisets are identical".into()));
    }
    let (m1, m2) = (mean(&a), mean(&b));
    let gamma = a.len().max(b.len());

    if m1 != m2 {
        let p = 1.0 / (2.0 * gamma as f64);
        let tau = 0.5 * (m1 + m2);
        let favored = if m2 > m1 { 2 } else { 1 };
        let (hi, lo) = if favored == 2 { (&b, &a) } else { (&a, &b) };
        let exact_gap = prob_mean_at_least(hi, p, tau) - prob_mean_at_least(lo, p, tau);
        let q = libm::pow(1.0 - p, gamma as f64);
        return Ok(SeparatorOutcome::Separator(MeanSeparator {
            p,
            tau,
            favored,
            exact_gap,
            guaranteed_gap: (2.0 * q - 1.0).max(0.0),
        }));
    }
    if a.len() != b.len() {
        return Ok(SeparatorOutcome::Unseparated);
    }

    let gamma = a.len();
    let i = (0..gamma).find(|&i| a[i] != b[i]).expect("multisets differ");
    // Leave-one-out means at the first differing sorted index; removing the
    // larger element leaves the smaller mean.
    let sum: f64 = a.iter().sum();
    let loo = |x: f64| (sum - x) / (gamma - 1) as f64;
    let (loo1, loo2) = (loo(a[i]), loo(b[i]));
    let favored = if a[i] > b[i] { 2 } else { 1 };
    let tau = 0.5 * (loo1 + loo2);
    let p = 1.0 / (2.0 * (gamma * gamma) as f64);
    let (hi, lo) = if favored == 2 { (&b, &a) } else { (&a, &b) };
    let exact_gap = prob_mean_at_least(hi, p, tau) - prob_mean_at_least(lo, p, tau);
    Ok(SeparatorOutcome::Separator(MeanSeparator {
        p,
        tau,
        favored,
        exact_gap,
        guaranteed_gap: 3.0 / (16.0 * (gamma * gamma) as f64),
    }))
}

/// The multiset pair whose 0/1-dropout mean distributions essentially
/// coincide, with the exact bookkeeping that shows it.
#[derive(Clone, Debug)]
pub struct MeanCounterexample {
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    pub p: f64,
    /// P(mean = 0) restricted to 0- and 1-dropouts, per set; equal exactly.
    pub p_zero_s1: f64,
    pub p_zero_s2: f64,
    /// Distinct 1-dropout means per set.
    pub one_dropout_means_s1: Vec<f64>,
    pub one_dropout_means_s2: Vec<f64>,
    /// P(1-dropout mean = +1 | s1) - same for s2; equals the closed form
    /// (l/2) p^2 (1-p)^(l-1).
    pub plus_one_gap: f64,
    pub plus_one_gap_closed_form: f64,
}

/// Builds `s1 = {+-(l-1)} x l/2` and `s2 = {+-l} x l/2 + {0}` and verifies
/// the 0/1-dropout accounting at dropout probability `p`.
pub fn mean_counterexample(l: usize, p: f64) -> Result<MeanCounterexample> {
    if l < 2 || l % 2 != 0 {
        return Err(Error::InvalidArgument("l must be even and >= 2".into()));
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument("p outside [0, 1)".into()));
    }
    let half = l / 2;
    let mut s1 = vec![-((l - 1) as f64); half];
    s1.extend(vec![(l - 1) as f64; half]);
    let mut s2 = vec![-(l as f64); half];
    s2.push(0.0);
    s2.extend(vec![l as f64; half]);

    let q = 1.0 - p;
    // P(mean = 0) over {0,1}-dropouts: s1 only through its 0-dropout; s2
    // through its 0-dropout or the 1-dropout of the 0 element. Both equal
    // (1-p)^l.
    let p_zero_s1 = libm::pow(q, l as f64);
    let p_zero_s2 = libm::pow(q, (l + 1) as f64) + p * libm::pow(q, l as f64);

    let one_means = |s: &[f64]| -> Vec<f64> {
        let mut out: Vec<f64> = (0..s.len())
            .map(|i| {
                let rest: Vec<f64> = s
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, &x)| x)
                    .collect();
                mean(&rest)
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    };
    let one_dropout_means_s1 = one_means(&s1);
    let one_dropout_means_s2 = one_means(&s2);

    // Exact 1-dropout probability of seeing mean = +1 in each set.
    let p_plus = |s: &[f64]| -> f64 {
        let n = s.len();
        (0..n)
            .filter(|&i| {
                let rest: Vec<f64> = s
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, &x)| x)
                    .collect();
                mean(&rest) == 1.0
            })
            .map(|_| p * libm::pow(q, (n - 1) as f64))
            .sum()
    };
    let plus_one_gap = p_plus(&s1) - p_plus(&s2);
    let plus_one_gap_closed_form = half as f64 * p * p * libm::pow(q, (l - 1) as f64);

    Ok(MeanCounterexample {
        s1,
        s2,
        p,
        p_zero_s1,
        p_zero_s2,
        one_dropout_means_s1,
        one_dropout_means_s2,
        plus_one_gap,
        plus_one_gap_closed_form,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separator(s1: &[f64], s2: &[f64]) -> MeanSeparator {
        match mean_separator(s1, s2).unwrap() {
            SeparatorOutcome::Separator(s) => s,
            SeparatorOutcome::Unseparated => panic!("expected a separator"),
        }
    }

    #[test]
    fn distinct_means_small_case() {
        let s = separator(&[1.0, 1.0], &[1.0, 3.0]);
        assert_eq!(s.p, 0.25);
        assert!(s.tau > 1.0 && s.tau < 2.0);
        assert_eq!(s.favored, 2);
        // The 0-dropout mass alone is (3/4)^2 = 0.5625 > 0.55.
        assert!(s.exact_gap >= 0.55, "gap {}", s.exact_gap);
        assert!(s.exact_gap >= s.guaranteed_gap);
    }

    #[test]
    fn equal_means_equal_sizes() {
        let s = separator(&[-3.0, -3.0, 3.0, 3.0], &[-3.0, -1.0, 1.0, 3.0]);
        assert_eq!(s.p, 1.0 / 32.0);
        // Smallest differing sorted index is 1 (-3 vs -1); removing the
        // larger element (-1, from s2) leaves the smaller mean, so s2 shows
        // mean >= tau less often... direction follows the sign convention.
        assert!(s.exact_gap >= 3.0 / (16.0 * 16.0), "gap {}", s.exact_gap);
        assert!(s.exact_gap >= s.guaranteed_gap);
    }

    #[test]
    fn figure_mean_case_separates() {
        // The mean-aggregation example: {1} vs {1, 1, -1, -1} has means
        // 1 vs 0.
        let s = separator(&[1.0], &[1.0, 1.0, -1.0, -1.0]);
        assert_eq!(s.favored, 1);
        assert!(s.exact_gap > 0.0);
    }

    #[test]
    fn equal_mean_different_size_is_unseparated() {
        let out = mean_separator(&[-3.0, -3.0, 3.0, 3.0], &[-4.0, -4.0, 0.0, 4.0, 4.0]).unwrap();
        assert!(matches!(out, SeparatorOutcome::Unseparated));
    }

    #[test]
    fn identical_multisets_are_an_error() {
        assert!(mean_separator(&[1.0, 2.0], &[2.0, 1.0]).is_err());
    }

    #[test]
    fn counterexample_l4() {
        let c = mean_counterexample(4, 0.1).unwrap();
        assert_eq!(c.s1, vec![-3.0, -3.0, 3.0, 3.0]);
        assert_eq!(c.s2, vec![-4.0, -4.0, 0.0, 4.0, 4.0]);
        assert!((c.p_zero_s1 - 0.9f64.powi(4)).abs() < 1e-15);
        assert!((c.p_zero_s1 - c.p_zero_s2).abs() < 1e-15);
        assert_eq!(c.one_dropout_means_s1, vec![-1.0, 1.0]);
        assert_eq!(c.one_dropout_means_s2, vec![-1.0, 0.0, 1.0]);
        assert!((c.plus_one_gap - c.plus_one_gap_closed_form).abs() < 1e-15);
    }

    #[test]
    fn counterexample_degenerate_l2() {
        let c = mean_counterexample(2, 0.25).unwrap();
        assert_eq!(c.s1, vec![-1.0, 1.0]);
        assert_eq!(c.s2, vec![-2.0, 0.0, 2.0]);
        assert!((c.p_zero_s1 - c.p_zero_s2).abs() < 1e-15);
        assert!((c.plus_one_gap - c.plus_one_gap_closed_form).abs() < 1e-15);
        assert!(mean_counterexample(3, 0.1).is_err());
    }

    #[test]
    fn exact_gap_always_meets_the_guarantee() {
        // Randomized sweep over small integer multisets.
        let mut rng = crate::rng::Rng::from_seed(77);
        for _ in 0..200 {
            let n = 2 + rng.below(5);
            let gen = |rng: &mut crate::rng::Rng| -> Vec<f64> {
                (0..n).map(|_| rng.below(7) as f64 - 3.0).collect()
            };
            let (s1, s2) = (gen(&mut rng), gen(&mut rng));
            if sorted(&s1) == sorted(&s2) {
                continue;
            }
            if let SeparatorOutcome::Separator(s) = mean_separator(&s1, &s2).unwrap() {
                assert!(
                    s.exact_gap >= s.guaranteed_gap - 1e-12,
                    "{s1:?} vs {s2:?}: gap {} < guarantee {}",
                    s.exact_gap,
                    s.guaranteed_gap
                );
            }
        }
    }
}
