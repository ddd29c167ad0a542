//! Dropout probability math and run-count bounds.
//!
//! Conventions: `gamma` is the size of the neighborhood of interest around a
//! node `u`, excluding `u` itself. A k-dropout is a specific subset S of that
//! neighborhood, |S| = k, being exactly the set of dropped nodes in a run; it
//! occurs (jointly with `u` surviving) with probability
//! `p^k * (1-p)^(gamma+1-k)` — the `+1` accounts for `u`'s own survival.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::{Error, Graph, Result};

/// Enumeration guard: subset bookkeeping is exponential in gamma.
pub const ENUMERATION_GAMMA_LIMIT: usize = 25;

/// The dropout probability maximizing the chance `p (1-p)^gamma` of any
/// specific 1-dropout: `p* = 1 / (1 + gamma)`.
pub fn optimal_p(gamma: usize) -> Result<f64> {
    if gamma < 1 {
        return Err(Error::InvalidArgument("gamma must be >= 1".into()));
    }
    Ok(1.0 / (1.0 + gamma as f64))
}

/// `p^k (1-p)^(gamma+1-k)`: probability that a given size-k subset is exactly
/// the set of dropped neighborhood nodes and `u` survives.
pub fn subset_probability(gamma: usize, p: f64, k: usize) -> f64 {
    libm::pow(p, k as f64) * libm::pow(1.0 - p, (gamma + 1 - k) as f64)
}

/// One boolean node-removal pattern.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DropoutMask {
    pub dropped: Vec<bool>,
    pub run_index: u32,
    /// (master_seed, run_index) this mask was derived from.
    pub seed_provenance: (u64, u32),
}

impl DropoutMask {
    pub fn none(node_count: usize) -> Self {
        DropoutMask {
            dropped: vec![false; node_count],
            run_index: 0,
            seed_provenance: (0, 0),
        }
    }

    pub fn dropped_nodes(&self) -> Vec<u32> {
        self.dropped
            .iter()
            .enumerate()
            .filter_map(|(i, &d)| d.then_some(i as u32))
            .collect()
    }

    pub fn alive(&self) -> Vec<bool> {
        self.dropped.iter().map(|&d| !d).collect()
    }
}

/// A batch of r masks with their RNG provenance.
#[derive(Clone, Debug)]
pub struct RunBatch {
    pub masks: Vec<DropoutMask>,
    pub p: f64,
    pub master_seed: u64,
}

/// Samples `r` masks for `g`, each node dropped i.i.d. with probability `p`.
///
/// Run k's randomness depends only on `(master_seed, k)`, so batches are
/// reproducible and independent of generation order.
pub fn sample_masks(g: &Graph, p: f64, r: usize, master_seed: u64) -> Result<RunBatch> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} outside [0, 1)")));
    }
    if r < 1 {
        return Err(Error::InvalidArgument("r must be >= 1".into()));
    }
    let n = g.node_count();
    let masks = (0..r as u32)
        .map(|k| sample_mask(n, p, master_seed, k))
        .collect();
    Ok(RunBatch {
        masks,
        p,
        master_seed,
    })
}

/// The mask of a single run; bit-identical regardless of calling order.
pub fn sample_mask(node_count: usize, p: f64, master_seed: u64, run_index: u32) -> DropoutMask {
    let mut rng = Rng::stream(master_seed, run_index as u64);
    DropoutMask {
        dropped: (0..node_count).map(|_| rng.bernoulli(p)).collect(),
        run_index,
        seed_provenance: (master_seed, run_index),
    }
}

/// Exact (and optionally empirical) distribution over dropout subsets of a
/// size-gamma neighborhood, `u`-survival included in every mass.
#[derive(Clone, Debug)]
pub struct DropoutDistribution {
    pub gamma: usize,
    pub p: f64,
    /// subset bitmask over the gamma neighborhood nodes -> exact probability.
    pub entries: BTreeMap<u32, f64>,
    /// Analytic mass of all subsets larger than the enumerated max_k.
    pub residual_tail: f64,
    /// Observed counts per subset over some run batch, if attached.
    pub empirical: Option<BTreeMap<u32, u64>>,
}

impl DropoutDistribution {
    /// Sum of enumerated masses plus the analytic tail; equals `1 - p`
    /// (the mass of the `u`-survives sector) up to floating error.
    pub fn total_mass(&self) -> f64 {
        // Kahan summation: 2^gamma small terms.
        let (mut sum, mut c) = (0.0f64, 0.0f64);
        for &m in self.entries.values() {
            let y = m - c;
            let t = sum + y;
            c = (t - sum) - y;
            sum = t;
        }
        sum + self.residual_tail
    }

    pub fn mass_of_size(&self, k: usize) -> f64 {
        self.entries
            .keys()
            .filter(|&&s| s.count_ones() as usize == k)
            .count() as f64
            * subset_probability(self.gamma, self.p, k)
    }
}

fn enumerate_size_k(gamma: usize, k: usize, out: &mut Vec<u32>) {
    // Gosper's hack over gamma-bit masks of popcount k.
    if k == 0 {
        out.push(0);
        return;
    }
    if k > gamma {
        return;
    }
    let limit: u64 = 1 << gamma;
    let mut v: u64 = (1 << k) - 1;
    while v < limit {
        out.push(v as u32);
        let t = v | (v - 1);
        v = (t + 1) | (((!t & (t + 1)) - 1) >> (v.trailing_zeros() + 1));
    }
}

/// Enumerates all dropout subsets of size <= `max_k` with exact masses and
/// reports the remaining mass analytically via the binomial tail.
pub fn exact_distribution(gamma: usize, p: f64, max_k: usize) -> Result<DropoutDistribution> {
    if gamma < 1 || gamma > ENUMERATION_GAMMA_LIMIT {
        return Err(Error::GuardExceeded(format!(
            "gamma = {gamma} outside 1..={ENUMERATION_GAMMA_LIMIT}"
        )));
    }
    if max_k > gamma {
        return Err(Error::InvalidArgument("max_k must be <= gamma".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument("p outside [0, 1]".into()));
    }
    let mut entries = BTreeMap::new();
    let mut masks = Vec::new();
    for k in 0..=max_k {
        masks.clear();
        enumerate_size_k(gamma, k, &mut masks);
        let mass = subset_probability(gamma, p, k);
        for &m in &masks {
            entries.insert(m, mass);
        }
    }
    let mut residual_tail = 0.0;
    for k in (max_k + 1)..=gamma {
        residual_tail += binomial(gamma, k) * subset_probability(gamma, p, k);
    }
    Ok(DropoutDistribution {
        gamma,
        p,
        entries,
        residual_tail,
        empirical: None,
    })
}

pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Which concentration statement a run budget targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    /// Every 1-dropout frequency within (1 +/- delta) of its expectation.
    OneComplete,
    /// Additionally every multi-dropout stays below (1 - delta) E1.
    KSeparated,
}

/// A run count with the concentration parameters it was derived from.
#[derive(Clone, Copy, Debug)]
pub struct RunBudget {
    pub r: u64,
    pub delta: f64,
    pub t: f64,
    pub regime: Regime,
}

fn check_budget_args(gamma: usize, delta: f64, t: f64) -> Result<()> {
    if gamma < 1 {
        return Err(Error::InvalidArgument("gamma must be >= 1".into()));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} outside (0, 1]")));
    }
    if t <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "t = {t} must exceed 1 (error probability 1/t < 1)"
        )));
    }
    Ok(())
}

/// Run count for the 1-complete regime:
/// `ceil((3e / delta^2) * (gamma + 1) * ln(2 gamma t))`.
///
/// With this many runs, each 1-dropout count lands in
/// `[(1-delta) E1, (1+delta) E1]` with probability at least `1 - 1/t`.
pub fn runs_one_complete(gamma: usize, delta: f64, t: f64) -> Result<u64> {
    check_budget_args(gamma, delta, t)?;
    let raw = 3.0 * core::f64::consts::E / (delta * delta)
        * (gamma as f64 + 1.0)
        * libm::log(2.0 * gamma as f64 * t);
    Ok(libm::ceil(raw) as u64)
}

/// Run count for the k-separated regime:
/// `ceil(C * (gamma + 1) * gamma * ln(2 gamma t))` with `C = 3e / delta^2`.
///
/// The bound's constant is only fixed up to Theta(1) by the concentration
/// argument; this C reuses the 1-complete branch constant and is validated
/// empirically by [`chernoff_validate`].
pub fn runs_k_separated(gamma: usize, delta: f64, t: f64) -> Result<u64> {
    check_budget_args(gamma, delta, t)?;
    let raw = 3.0 * core::f64::consts::E / (delta * delta)
        * (gamma as f64 + 1.0)
        * gamma as f64
        * libm::log(2.0 * gamma as f64 * t);
    Ok(libm::ceil(raw) as u64)
}

impl RunBudget {
    pub fn one_complete(gamma: usize, delta: f64, t: f64) -> Result<Self> {
        Ok(RunBudget {
            r: runs_one_complete(gamma, delta, t)?,
            delta,
            t,
            regime: Regime::OneComplete,
        })
    }

    pub fn k_separated(gamma: usize, delta: f64, t: f64) -> Result<Self> {
        Ok(RunBudget {
            r: runs_k_separated(gamma, delta, t)?,
            delta,
            t,
            regime: Regime::KSeparated,
        })
    }

    /// Same parameters with an explicit run count (for undersized budgets).
    pub fn with_runs(self, r: u64) -> Self {
        RunBudget { r, ..self }
    }
}

/// Outcome of a Monte-Carlo check of the concentration statements.
#[derive(Clone, Debug)]
pub struct ChernoffReport {
    pub gamma: usize,
    pub p: f64,
    pub budget: RunBudget,
    pub trials: usize,
    /// Trials in which the regime's event held.
    pub passes: usize,
    pub pass_fraction: f64,
    /// `1 - 1/t` minus two-sigma binomial Monte-Carlo slack.
    pub threshold: f64,
    /// Whether pass_fraction >= threshold.
    pub sufficient: bool,
    /// E1 = r * p * (1-p)^gamma.
    pub expected_e1: f64,
    /// Mean observed X_v over all trials and all v.
    pub empirical_e1: f64,
    /// Standard error of `empirical_e1` (CLT, trials * gamma samples).
    pub empirical_e1_stderr: f64,
}

/// Runs `trials` independent batches of `budget.r` runs over a neighborhood
/// of size `gamma` (plus the center node) and measures how often the
/// regime's concentration event holds.
pub fn chernoff_validate(
    gamma: usize,
    budget: &RunBudget,
    trials: usize,
    seed: u64,
) -> Result<ChernoffReport> {
    if gamma < 1 || gamma > ENUMERATION_GAMMA_LIMIT {
        return Err(Error::GuardExceeded(format!(
            "gamma = {gamma} outside 1..={ENUMERATION_GAMMA_LIMIT}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let p = optimal_p(gamma)?;
    let r = budget.r;
    let e1 = r as f64 * p * libm::pow(1.0 - p, gamma as f64);
    let lo = (1.0 - budget.delta) * e1;
    let hi = (1.0 + budget.delta) * e1;

    let mut passes = 0usize;
    let mut x1_sum = 0.0f64;
    let mut x1_sq_sum = 0.0f64;
    for trial in 0..trials {
        let mut rng = Rng::stream(seed, trial as u64);
        let mut x1 = vec![0u64; gamma];
        let mut multi: BTreeMap<u32, u64> = BTreeMap::new();
        for _ in 0..r {
            if rng.bernoulli(p) {
                continue; // u dropped: no observation this run
            }
            let mut mask: u32 = 0;
            for v in 0..gamma {
                if rng.bernoulli(p) {
                    mask |= 1 << v;
                }
            }
            match mask.count_ones() {
                0 => {}
                1 => x1[mask.trailing_zeros() as usize] += 1,
                _ => *multi.entry(mask).or_insert(0) += 1,
            }
        }
        let ones_ok = x1.iter().all(|&x| (x as f64) >= lo && (x as f64) <= hi);
        let event = match budget.regime {
            Regime::OneComplete => ones_ok,
            Regime::KSeparated => ones_ok && multi.values().all(|&x| (x as f64) < lo),
        };
        if event {
            passes += 1;
        }
        for &x in &x1 {
            x1_sum += x as f64;
            x1_sq_sum += (x as f64) * (x as f64);
        }
    }

    let samples = (trials * gamma) as f64;
    let empirical_e1 = x1_sum / samples;
    let var = (x1_sq_sum / samples - empirical_e1 * empirical_e1).max(0.0);
    let q = 1.0 / budget.t;
    let slack = 2.0 * libm::sqrt(q * (1.0 - q) / trials as f64);
    let pass_fraction = passes as f64 / trials as f64;
    let threshold = 1.0 - q - slack;
    Ok(ChernoffReport {
        gamma,
        p,
        budget: *budget,
        trials,
        passes,
        pass_fraction,
        threshold,
        sufficient: pass_fraction >= threshold,
        expected_e1: e1,
        empirical_e1,
        empirical_e1_stderr: libm::sqrt(var / samples),
    })
}
