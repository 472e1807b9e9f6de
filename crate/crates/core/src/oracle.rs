//! Ground-truth engines and Monte-Carlo harnesses.
//!
//! Three tools validate the sketches:
//!
//! * [`ExactStats`] replays a stream into a frequency map keyed by the *raw*
//!   indices (so sketch-side universe-reduction collisions show up as sketch
//!   error, never as oracle error) and reports exact `L₀`, `F₀`, and `F_p`.
//! * [`bb_simulate`] throws good and bad balls into bins — under a fresh
//!   limited-independence hash per trial, or full randomness — and counts
//!   bins holding at least one good ball and no bad ball, the process whose
//!   closed forms live in [`crate::numerics::bb_mean`] and
//!   [`crate::numerics::bb_variance`].
//! * [`run_trials`] measures an estimator's success rate over independently
//!   seeded trials on a fixed generated stream, producing a serializable
//!   [`TrialReport`].

use std::collections::HashMap;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::f0::{F0Config, F0Sketch};
use crate::hashing::KWiseHash;
use crate::l0::{two_pass_estimate, L0Config, L0FullSketch};
use crate::lp::{LpConfig, LpSketch};
use crate::seeds::{rng_from, split, tags};
use crate::stream::{GeneratorSpec, StreamModel};

// ---------------------------------------------------------------------------
// Exact stream statistics
// ---------------------------------------------------------------------------

/// Exact replay of a stream: full frequency vector plus derived norms.
///
/// Indices are kept raw (pre-reduction), and an index stays known even when
/// its frequency returns to zero, so `F₀` counts indices *ever touched* while
/// `L₀` counts indices with nonzero *net* frequency; `F₀ ≥ L₀` always.
#[derive(Debug, Clone, Default)]
pub struct ExactStats {
    freq: HashMap<u64, i64>,
    updates: u64,
    max_abs_frequency: u64,
}

impl ExactStats {
    /// An empty statistics accumulator.
    pub fn new() -> Self {
        Self::default()
    }

    /// Replays one update.
    pub fn update(&mut self, i: u64, v: i64) {
        let entry = self.freq.entry(i).or_insert(0);
        *entry += v;
        self.updates += 1;
        self.max_abs_frequency = self.max_abs_frequency.max(entry.unsigned_abs());
    }

    /// Replays a whole update sequence.
    pub fn from_updates(updates: impl IntoIterator<Item = (u64, i64)>) -> Self {
        let mut stats = Self::new();
        for (i, v) in updates {
            stats.update(i, v);
        }
        stats
    }

    /// Replays a fallible update sequence (e.g. a stream file parse).
    pub fn try_from_updates(
        updates: impl IntoIterator<Item = Result<(u64, i64)>>,
    ) -> Result<Self> {
        let mut stats = Self::new();
        for u in updates {
            let (i, v) = u?;
            stats.update(i, v);
        }
        Ok(stats)
    }

    /// Number of indices with nonzero net frequency.
    pub fn l0(&self) -> u64 {
        self.freq.values().filter(|&&c| c != 0).count() as u64
    }

    /// Number of distinct indices ever touched by an update.
    pub fn f0(&self) -> u64 {
        self.freq.len() as u64
    }

    /// The frequency moment `F_p = Σ|a_i|^p` for `p > 0`. Integer powers are
    /// summed exactly in wide integers before the final conversion.
    pub fn fp(&self, p: f64) -> f64 {
        assert!(p > 0.0, "frequency moments need p > 0");
        if p == 1.0 {
            let sum: i128 = self.freq.values().map(|&c| i128::from(c.unsigned_abs())).sum();
            return sum as f64;
        }
        if p == 2.0 {
            let sum: i128 = self
                .freq
                .values()
                .map(|&c| i128::from(c) * i128::from(c))
                .sum();
            return sum as f64;
        }
        self.freq
            .values()
            .filter(|&&c| c != 0)
            .map(|&c| (c.unsigned_abs() as f64).powf(p))
            .sum()
    }

    /// The norm `L_p = F_p^{1/p}`.
    pub fn lp(&self, p: f64) -> f64 {
        self.fp(p).powf(1.0 / p)
    }

    /// Net frequency of one index.
    pub fn frequency(&self, i: u64) -> i64 {
        self.freq.get(&i).copied().unwrap_or(0)
    }

    /// Number of updates replayed.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Largest `|frequency|` any index reached at any point of the replay.
    pub fn max_abs_frequency(&self) -> u64 {
        self.max_abs_frequency
    }
}

// ---------------------------------------------------------------------------
// Balls-and-bins simulation
// ---------------------------------------------------------------------------

/// How ball placements are randomized in [`bb_simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Independence {
    /// A fresh k-wise independent polynomial hash per trial.
    KWise(u32),
    /// Independent uniform placement per ball.
    Full,
}

/// Empirical moments of the good-ball occupancy count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BbSample {
    /// Mean of the per-trial counts.
    pub mean: f64,
    /// Unbiased sample variance of the per-trial counts.
    pub variance: f64,
    /// Number of trials.
    pub trials: u64,
}

/// Throws `good` good balls and `bad` bad balls into `bins` bins, `trials`
/// times, and returns the empirical mean and variance of the number of bins
/// holding at least one good ball and no bad ball.
///
/// Under [`Independence::KWise`], each trial uses a fresh k-wise polynomial
/// hash over ball labels (bad balls labeled after the good ones); under
/// [`Independence::Full`], each ball is placed by an independent uniform draw.
pub fn bb_simulate(
    good: u64,
    bad: u64,
    bins: u64,
    independence: Independence,
    trials: u64,
    seed: u64,
) -> Result<BbSample> {
    if trials == 0 {
        return Err(Error::InvalidParam("need at least one trial".into()));
    }
    if bins == 0 {
        return Err(Error::InvalidParam("need at least one bin".into()));
    }
    let balls = good + bad;
    let mut good_stamp = vec![0u64; bins as usize];
    let mut bad_stamp = vec![0u64; bins as usize];
    let mut rng = rng_from(split(seed, tags::BB_TRIAL, 0));
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    for t in 1..=trials {
        let mut count = 0u64;
        match independence {
            Independence::Full => {
                for _ in 0..bad {
                    bad_stamp[rng.gen_range(0..bins) as usize] = t;
                }
                for _ in 0..good {
                    let b = rng.gen_range(0..bins) as usize;
                    if bad_stamp[b] != t && good_stamp[b] != t {
                        good_stamp[b] = t;
                        count += 1;
                    }
                }
            }
            Independence::KWise(k) => {
                let hash = KWiseHash::new(
                    k,
                    balls.max(1),
                    bins,
                    split(seed, tags::BB_TRIAL, t),
                )?;
                for ball in good..balls {
                    bad_stamp[hash.eval_unchecked(ball) as usize] = t;
                }
                for ball in 0..good {
                    let b = hash.eval_unchecked(ball) as usize;
                    if bad_stamp[b] != t && good_stamp[b] != t {
                        good_stamp[b] = t;
                        count += 1;
                    }
                }
            }
        }
        let x = count as f64;
        sum += x;
        sumsq += x * x;
    }
    let mean = sum / trials as f64;
    let variance = if trials >= 2 {
        ((sumsq - trials as f64 * mean * mean) / (trials as f64 - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(BbSample {
        mean,
        variance,
        trials,
    })
}

// ---------------------------------------------------------------------------
// Trial harness
// ---------------------------------------------------------------------------

/// Which estimator a [`run_trials`] campaign exercises.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EstimatorSpec {
    /// One-pass p-norm sketch; success = relative error ≤ ε against exact `L_p`.
    Lp {
        /// Norm exponent, `0 < p < 2`.
        p: f64,
        /// Sketch accuracy parameter.
        eps: f64,
    },
    /// One-pass turnstile support-size sketch against exact `L₀`.
    L0 {
        /// Sketch accuracy parameter.
        eps: f64,
    },
    /// Two-pass variant of the support-size estimator against exact `L₀`.
    L0TwoPass {
        /// Sketch accuracy parameter.
        eps: f64,
    },
    /// Insertion-only distinct-count sketch against exact `F₀`.
    F0 {
        /// Sketch accuracy parameter.
        eps: f64,
    },
    /// The exact oracle reporting `L₀` itself (succeeds by construction;
    /// used to validate the harness).
    ExactL0,
    /// The exact oracle reporting `F₀` itself.
    ExactF0,
    /// The exact oracle reporting `L_p` itself.
    ExactLp {
        /// Norm exponent.
        p: f64,
    },
}

impl EstimatorSpec {
    /// Stable label used in reports.
    pub fn label(&self) -> String {
        match self {
            EstimatorSpec::Lp { p, .. } => format!("lp(p={p})"),
            EstimatorSpec::L0 { .. } => "l0".into(),
            EstimatorSpec::L0TwoPass { .. } => "l0-2pass".into(),
            EstimatorSpec::F0 { .. } => "f0".into(),
            EstimatorSpec::ExactL0 => "exact-l0".into(),
            EstimatorSpec::ExactF0 => "exact-f0".into(),
            EstimatorSpec::ExactLp { p } => format!("exact-lp(p={p})"),
        }
    }

    /// Whether success requires bit-exact agreement rather than a relative
    /// error bound.
    pub fn exact_match_mode(&self) -> bool {
        matches!(
            self,
            EstimatorSpec::ExactL0 | EstimatorSpec::ExactF0 | EstimatorSpec::ExactLp { .. }
        )
    }
}

/// Outcome of a [`run_trials`] campaign.
///
/// `update_nanos_mean` is the only nondeterministic field; it is optional so
/// reports can be emitted byte-identically across reruns when timing is not
/// requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    /// Report schema version.
    pub schema: u32,
    /// Estimator label.
    pub algorithm: String,
    /// Number of independent trials.
    pub trials: u64,
    /// Trials whose estimate met the success rule.
    pub successes: u64,
    /// Relative-error threshold defining success (ignored in exact mode).
    pub epsilon: f64,
    /// Success required bit-exact agreement with the truth.
    pub exact_match_mode: bool,
    /// The exact value being estimated.
    pub truth: f64,
    /// Per-trial estimates, in trial order.
    pub estimates: Vec<f64>,
    /// Per-trial relative errors (`∞` where the truth is 0 and the estimate
    /// is not).
    pub relative_errors: Vec<f64>,
    /// Master seed the campaign derived its per-trial seeds from.
    pub master_seed: u64,
    /// Mean wall-clock nanoseconds per sketch update, when measured.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update_nanos_mean: Option<f64>,
}

/// Runs `trials` independently seeded estimator instances over the stream
/// produced by `generator` (fixed across trials), comparing each estimate to
/// the exact oracle. Success means relative error ≤ `epsilon`, or bit-exact
/// agreement for the exact-oracle estimators.
pub fn run_trials(
    estimator: EstimatorSpec,
    generator: &GeneratorSpec,
    trials: u64,
    epsilon: f64,
    master_seed: u64,
) -> Result<TrialReport> {
    if trials == 0 {
        return Err(Error::InvalidParam("trials must be ≥ 1".into()));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) && !estimator.exact_match_mode() {
        return Err(Error::InvalidParam(format!(
            "success threshold must be positive, got {epsilon}"
        )));
    }
    generator.validate()?;
    let header = generator.header();
    if matches!(estimator, EstimatorSpec::F0 { .. })
        && header.model != StreamModel::InsertionOnly
    {
        return Err(Error::InvalidParam(format!(
            "the distinct-count sketch needs an insertion-only stream, \
             but the generator produces a {} stream",
            header.model
        )));
    }

    let updates: Vec<(u64, i64)> = generator.iter()?.collect();
    let stats = ExactStats::from_updates(updates.iter().copied());
    let truth = match estimator {
        EstimatorSpec::Lp { p, .. } | EstimatorSpec::ExactLp { p } => stats.lp(p),
        EstimatorSpec::L0 { .. } | EstimatorSpec::L0TwoPass { .. } | EstimatorSpec::ExactL0 => {
            stats.l0() as f64
        }
        EstimatorSpec::F0 { .. } | EstimatorSpec::ExactF0 => stats.f0() as f64,
    };

    let mut estimates = Vec::with_capacity(trials as usize);
    let mut relative_errors = Vec::with_capacity(trials as usize);
    let mut successes = 0u64;
    let mut timed_nanos = 0u128;
    let mut timed_updates = 0u64;

    for t in 0..trials {
        let trial_seed = split(master_seed, tags::TRIAL, t);
        let estimate = match estimator {
            EstimatorSpec::Lp { p, eps } => {
                let config = LpConfig::new(p, eps, header.n, header.m, header.magnitude);
                let mut sketch = LpSketch::new(config, trial_seed).map_err(|e| {
                    Error::InvalidParam(format!("p-norm sketch construction failed: {e}"))
                })?;
                let start = Instant::now();
                for &(i, v) in &updates {
                    sketch.update(i, v)?;
                }
                timed_nanos += start.elapsed().as_nanos();
                timed_updates += updates.len() as u64;
                sketch.estimate().value
            }
            EstimatorSpec::L0 { eps } => {
                let config = L0Config::new(eps, header.n, header.m, header.magnitude);
                let mut sketch = L0FullSketch::new(config, trial_seed).map_err(|e| {
                    Error::InvalidParam(format!("support-size sketch construction failed: {e}"))
                })?;
                let start = Instant::now();
                for &(i, v) in &updates {
                    sketch.update(i, v)?;
                }
                timed_nanos += start.elapsed().as_nanos();
                timed_updates += updates.len() as u64;
                sketch.estimate().value
            }
            EstimatorSpec::L0TwoPass { eps } => {
                let config = L0Config::new(eps, header.n, header.m, header.magnitude);
                let start = Instant::now();
                let report = two_pass_estimate(&config, trial_seed, || {
                    Ok(updates.iter().map(|&u| Ok(u)))
                })?;
                timed_nanos += start.elapsed().as_nanos();
                timed_updates += 2 * updates.len() as u64;
                report.value
            }
            EstimatorSpec::F0 { eps } => {
                let config = F0Config::new(eps, header.n, header.m);
                let mut sketch = F0Sketch::new(config, trial_seed).map_err(|e| {
                    Error::InvalidParam(format!(
                        "distinct-count sketch construction failed: {e}"
                    ))
                })?;
                let start = Instant::now();
                for &(i, _) in &updates {
                    sketch.update(i)?;
                }
                timed_nanos += start.elapsed().as_nanos();
                timed_updates += updates.len() as u64;
                sketch.estimate().value
            }
            EstimatorSpec::ExactL0 => stats.l0() as f64,
            EstimatorSpec::ExactF0 => stats.f0() as f64,
            EstimatorSpec::ExactLp { p } => stats.lp(p),
        };

        let rel_err = if truth == 0.0 {
            if estimate == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (estimate - truth).abs() / truth
        };
        let success = if estimator.exact_match_mode() {
            estimate == truth
        } else {
            rel_err <= epsilon
        };
        if success {
            successes += 1;
        }
        estimates.push(estimate);
        relative_errors.push(rel_err);
    }

    let update_nanos_mean =
        (timed_updates > 0).then(|| timed_nanos as f64 / timed_updates as f64);
    Ok(TrialReport {
        schema: 1,
        algorithm: estimator.label(),
        trials,
        successes,
        epsilon,
        exact_match_mode: estimator.exact_match_mode(),
        truth,
        estimates,
        relative_errors,
        master_seed,
        update_nanos_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{bb_mean, bb_variance};
    use crate::stream::GeneratorKind;

    #[test]
    fn empty_stream_has_zero_stats() {
        let stats = ExactStats::new();
        assert_eq!(stats.l0(), 0);
        assert_eq!(stats.f0(), 0);
        assert_eq!(stats.fp(1.0), 0.0);
        assert_eq!(stats.fp(0.5), 0.0);
        assert_eq!(stats.updates(), 0);
        assert_eq!(stats.max_abs_frequency(), 0);
    }

    #[test]
    fn cancelling_updates_separate_l0_from_f0() {
        let stats = ExactStats::from_updates([(1, 3), (1, -3), (2, 1)]);
        assert_eq!(stats.l0(), 1);
        assert_eq!(stats.f0(), 2);
        assert_eq!(stats.fp(1.0), 1.0);
        assert_eq!(stats.frequency(1), 0);
        assert_eq!(stats.frequency(2), 1);
        assert_eq!(stats.max_abs_frequency(), 3);
    }

    #[test]
    fn squared_l2_is_exact() {
        let stats = ExactStats::from_updates([(1, 3), (2, 4)]);
        assert_eq!(stats.fp(2.0), 25.0);
        assert_eq!(stats.lp(2.0), 5.0);
    }

    #[test]
    fn l1_equals_running_counter_total_on_strict_streams() {
        // On a strict-turnstile stream no frequency dips below zero, so the
        // signed sum of update values equals Σ aᵢ = L₁.
        let spec = GeneratorSpec {
            kind: GeneratorKind::Cancel { fraction: 0.4 },
            universe: 1 << 16,
            target: 500,
            length: 0,
            seed: 21,
        };
        let updates: Vec<(u64, i64)> = spec.iter().unwrap().collect();
        let counter_total: i64 = updates.iter().map(|&(_, v)| v).sum();
        let stats = ExactStats::from_updates(updates);
        assert_eq!(stats.fp(1.0), counter_total as f64);
    }

    #[test]
    fn fractional_moments_accumulate_magnitudes() {
        let stats = ExactStats::from_updates([(0, 4), (1, -9)]);
        // F_{1/2} = √4 + √9 = 5.
        assert!((stats.fp(0.5) - 5.0).abs() < 1e-12);
        assert!((stats.lp(0.5) - 25.0).abs() < 1e-9);
    }

    #[test]
    fn one_ball_occupies_one_bin_always() {
        let s = bb_simulate(1, 0, 64, Independence::Full, 500, 9).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);
        let s = bb_simulate(1, 0, 64, Independence::KWise(4), 500, 9).unwrap();
        assert_eq!(s.mean, 1.0);
        assert_eq!(s.variance, 0.0);
    }

    #[test]
    fn no_good_balls_means_zero() {
        let s = bb_simulate(0, 5, 64, Independence::Full, 100, 1).unwrap();
        assert_eq!(s.mean, 0.0);
        let s = bb_simulate(0, 0, 64, Independence::KWise(2), 100, 1).unwrap();
        assert_eq!(s.mean, 0.0);
    }

    #[test]
    fn simulation_matches_closed_forms_at_full_randomness() {
        // 10⁵ trials keep this test fast; the acceptance suite runs 10⁶.
        for &(a, b, k) in &[(10u64, 0u64, 100u64), (50, 30, 200), (7, 120, 128)] {
            let trials = 100_000u64;
            let s = bb_simulate(a, b, k, Independence::Full, trials, 77).unwrap();
            let mean = bb_mean(a, b, k);
            let var = bb_variance(a, b, k);
            let se = (var / trials as f64).sqrt();
            assert!(
                (s.mean - mean).abs() <= 3.0 * se + 1e-9,
                "A={a} B={b} K={k}: {} vs {mean} ± {se}",
                s.mean
            );
            // Empirical variance within 10% of the closed form (loose; the
            // acceptance suite pins the sharper bounds).
            assert!(
                (s.variance - var).abs() <= 0.1 * var + 0.05,
                "A={a} B={b} K={k}: var {} vs {var}",
                s.variance
            );
        }
    }

    #[test]
    fn eight_wise_hashing_tracks_full_randomness() {
        let trials = 40_000u64;
        let (a, b, k) = (100u64, 50u64, 400u64);
        let full = bb_simulate(a, b, k, Independence::Full, trials, 5).unwrap();
        let kwise = bb_simulate(a, b, k, Independence::KWise(8), trials, 6).unwrap();
        assert!(
            (full.mean - kwise.mean).abs() <= 0.05 * full.mean,
            "full {} vs 8-wise {}",
            full.mean,
            kwise.mean
        );
    }

    #[test]
    fn simulation_rejects_degenerate_parameters() {
        assert!(bb_simulate(1, 1, 10, Independence::Full, 0, 0).is_err());
        assert!(bb_simulate(1, 1, 0, Independence::Full, 10, 0).is_err());
    }

    #[test]
    fn simulation_is_deterministic() {
        let a = bb_simulate(20, 10, 100, Independence::KWise(4), 1000, 3).unwrap();
        let b = bb_simulate(20, 10, 100, Independence::KWise(4), 1000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exact_oracle_estimator_always_succeeds() {
        let generator = GeneratorSpec {
            kind: GeneratorKind::Cancel { fraction: 0.5 },
            universe: 1 << 16,
            target: 200,
            length: 0,
            seed: 31,
        };
        let report = run_trials(EstimatorSpec::ExactL0, &generator, 25, 0.1, 99).unwrap();
        assert_eq!(report.successes, report.trials);
        assert_eq!(report.truth, 100.0);
        assert!(report.exact_match_mode);
        assert!(report.relative_errors.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn zero_trials_rejected() {
        let generator = GeneratorSpec {
            kind: GeneratorKind::Uniform,
            universe: 100,
            target: 10,
            length: 0,
            seed: 0,
        };
        assert!(run_trials(EstimatorSpec::ExactF0, &generator, 0, 0.1, 0).is_err());
    }

    #[test]
    fn f0_estimator_requires_insertion_only_streams() {
        let generator = GeneratorSpec {
            kind: GeneratorKind::Cancel { fraction: 0.5 },
            universe: 1 << 16,
            target: 100,
            length: 0,
            seed: 0,
        };
        assert!(run_trials(EstimatorSpec::F0 { eps: 0.1 }, &generator, 1, 0.1, 0).is_err());
    }

    #[test]
    fn reports_are_reproducible_and_serializable() {
        let generator = GeneratorSpec {
            kind: GeneratorKind::Uniform,
            universe: 1 << 14,
            target: 300,
            length: 600,
            seed: 8,
        };
        let mut a = run_trials(EstimatorSpec::F0 { eps: 0.2 }, &generator, 5, 0.2, 42).unwrap();
        let mut b = run_trials(EstimatorSpec::F0 { eps: 0.2 }, &generator, 5, 0.2, 42).unwrap();
        // Timing is wall-clock and must be stripped for byte comparisons.
        a.update_nanos_mean = None;
        b.update_nanos_mean = None;
        assert_eq!(a, b);
        let json_a = serde_json::to_string(&a).unwrap();
        let json_b = serde_json::to_string(&b).unwrap();
        assert_eq!(json_a, json_b);
        assert!(!json_a.contains("update_nanos_mean"));
        let back: TrialReport = serde_json::from_str(&json_a).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn distinct_count_campaign_meets_its_gate() {
        let generator = GeneratorSpec {
            kind: GeneratorKind::Uniform,
            universe: 1 << 14,
            target: 500,
            length: 1000,
            seed: 17,
        };
        let report =
            run_trials(EstimatorSpec::F0 { eps: 0.1 }, &generator, 20, 0.1, 1234).unwrap();
        assert_eq!(report.truth, 500.0);
        assert!(
            report.successes >= 16,
            "only {}/{} trials within ε",
            report.successes,
            report.trials
        );
        assert!(report.update_nanos_mean.is_some());
    }

    #[test]
    fn support_size_campaign_meets_its_gate() {
        let generator = GeneratorSpec {
            kind: GeneratorKind::Cancel { fraction: 0.5 },
            universe: 1 << 14,
            target: 400,
            length: 0,
            seed: 23,
        };
        let report =
            run_trials(EstimatorSpec::L0 { eps: 0.15 }, &generator, 10, 0.15, 77).unwrap();
        assert_eq!(report.truth, 200.0);
        assert!(
            report.successes >= 7,
            "only {}/{} trials within ε",
            report.successes,
            report.trials
        );
    }
}
