//! Turnstile sketch for the L_p norm, `0 < p < 2`.
//!
//! The sketch keeps `r` linear counters `A_j = Σ_i a_i·X_{i,j}` where the
//! `X_{i,j}` are discretized p-stable variates ([`crate::stable`]); by
//! p-stability each `A_j` is distributed as `‖a‖_p · X` for a fresh variate
//! `X`. The estimator first takes `A = median_j |A_j|` as a constant-factor
//! scale, then refines it through the empirical cosine transform
//! `C = (1/r)Σ_j cos(A_j/A)`, whose expectation is `e^{−(‖a‖_p/A)^p}`;
//! solving gives the output `A·(−ln C)^{1/p}`.
//!
//! Counters are exact 128-bit integers in units of the discretization step
//! δ, so the sketch is exactly linear: deletions cancel insertions
//! bit-for-bit, update order never matters, and sketches of stream shards
//! merge by counter addition into the sketch of the concatenated stream.

use crate::error::{Error, Result};
use crate::serial::Reader;
use crate::stable::{StableGenerator, StableParams, StableRowSeeds};

/// Fixed calibration seed for the fallback scale constant; a distributional
/// constant of `p` alone, so every sketch uses the same draw sequence.
const CALIBRATION_SEED: u64 = 0x6B61_7070_615F_7365;
const CALIBRATION_DRAWS: usize = 32_001;

/// Counter budget ceiling: worst-case `Σ|v·q|` must stay below 2^126 so
/// 128-bit accumulation cannot overflow.
const BUDGET_LIMIT: f64 = 8.3e37; // slightly under 2^126

const SERIAL_MAGIC: u32 = 0x4C50_534B; // "LPSK"
const SERIAL_VERSION: u32 = 1;

/// Configuration of an [`LpSketch`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpConfig {
    /// Norm order, in `(0, 2)`.
    pub p: f64,
    /// Target relative accuracy, in `(0, 1)`; must satisfy `ε ≥ 1/√m`.
    pub eps: f64,
    /// Universe size: update indices lie in `[0, n)`.
    pub n: u64,
    /// Stream length bound (number of updates).
    pub m: u64,
    /// Per-update magnitude bound: `|v| ≤ max_increment`.
    pub max_increment: u64,
    /// Row-count coefficient; the sketch uses `r = ⌈rows_coefficient/ε²⌉`
    /// rows.
    pub rows_coefficient: f64,
}

impl LpConfig {
    /// Convenience constructor with the default row coefficient.
    ///
    /// The default is `8·max(1, 1/p)²`. The extra `1/p²` factor below
    /// `p = 1` compensates for the estimator's sensitivity to noise in the
    /// empirical characteristic function: the recovered norm is raised to
    /// the power `1/p`, which amplifies the per-row standard error by a
    /// factor of `1/p`, so the row count must grow by `1/p²` to hold the
    /// same relative accuracy.
    pub fn new(p: f64, eps: f64, n: u64, m: u64, max_increment: u64) -> Self {
        Self {
            p,
            eps,
            n,
            m,
            max_increment,
            rows_coefficient: 8.0 * (1.0_f64.max(1.0 / p)).powi(2),
        }
    }

    /// Number of counter rows, `⌈rows_coefficient/ε²⌉`.
    pub fn rows(&self) -> usize {
        (self.rows_coefficient / (self.eps * self.eps)).ceil() as usize
    }

    /// Independence degree of the per-row index hash,
    /// `max(2, ⌈log₂(1/ε)⌉)`.
    pub fn hash_k(&self) -> u32 {
        ((1.0 / self.eps).log2().ceil() as u32).max(2)
    }

    /// Effective dimension bound `N = min{n, m}`.
    pub fn effective_n(&self) -> u64 {
        self.n.min(self.m)
    }

    fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 2.0) {
            return Err(Error::InvalidParam(format!(
                "norm order p must lie in (0, 2), got {}",
                self.p
            )));
        }
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::InvalidParam(format!(
                "accuracy must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if self.n == 0 || self.m == 0 || self.max_increment == 0 {
            return Err(Error::InvalidParam(
                "stream bounds n, m, max_increment must be ≥ 1".into(),
            ));
        }
        if self.eps < 1.0 / (self.m as f64).sqrt() {
            return Err(Error::InvalidParam(format!(
                "accuracy {} below 1/√m = {}; a stream this short cannot \
                 support the requested precision",
                self.eps,
                1.0 / (self.m as f64).sqrt()
            )));
        }
        if self.rows() < 4 {
            return Err(Error::InvalidParam(format!(
                "row count {} too small (need ≥ 4); raise rows_coefficient",
                self.rows()
            )));
        }
        Ok(())
    }
}

/// Result of [`LpSketch::estimate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpEstimate {
    /// Estimated `‖a‖_p` (nonnegative).
    pub value: f64,
    /// True when the cosine refinement broke down (`C ∉ (0,1)`) and the
    /// output fell back to the rescaled counter median, a constant-factor
    /// estimate only.
    pub used_fallback: bool,
}

/// Linear turnstile sketch of the L_p norm.
#[derive(Debug, Clone)]
pub struct LpSketch {
    config: LpConfig,
    master_seed: u64,
    generator: StableGenerator,
    /// Exact counters in δ units; `counters[j] = Σ_i a_i·X_{i,j}/δ`.
    counters: Vec<i128>,
    /// Staging buffer for per-update row hash values (not part of the
    /// sketch state).
    scratch: Vec<u64>,
    updates_seen: u64,
    /// Reciprocal of the median |X| of the variate distribution, making the
    /// fallback `A·fallback_scale` a constant-factor norm estimate.
    fallback_scale: f64,
}

impl LpSketch {
    /// Creates a zeroed sketch; seed material and lookup tables are
    /// materialized here, and the counter budget is proved sufficient.
    pub fn new(config: LpConfig, master_seed: u64) -> Result<Self> {
        config.validate()?;
        let params = StableParams::new(config.p, config.eps, config.m)?;
        let seeds = StableRowSeeds::new(master_seed, config.rows(), config.hash_k(), config.n)?;
        let generator = StableGenerator::new(params, seeds);

        let budget = config.m as f64 * config.max_increment as f64 * generator.worst_case_units();
        if !(budget < BUDGET_LIMIT) {
            return Err(Error::CounterOverflow(format!(
                "worst-case counter magnitude {budget:e} exceeds the 128-bit \
                 budget; reduce m, max_increment, or the accuracy demand"
            )));
        }

        let fallback_scale = 1.0 / median_abs_variate(config.p);
        let counters = vec![0i128; config.rows()];
        let scratch = vec![0u64; config.rows()];
        Ok(Self {
            config,
            master_seed,
            generator,
            counters,
            scratch,
            updates_seen: 0,
            fallback_scale,
        })
    }

    pub fn config(&self) -> &LpConfig {
        &self.config
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn generator(&self) -> &StableGenerator {
        &self.generator
    }

    /// Counter `j` in δ units.
    pub fn counter_units(&self, j: usize) -> i128 {
        self.counters[j]
    }

    pub fn updates_seen(&self) -> u64 {
        self.updates_seen
    }

    /// Applies the turnstile update `a_i += v`.
    pub fn update(&mut self, i: u64, v: i64) -> Result<()> {
        if i >= self.config.n {
            return Err(Error::OutOfDomain {
                x: i,
                domain: self.config.n,
            });
        }
        if v.unsigned_abs() > self.config.max_increment {
            return Err(Error::ModelViolation {
                position: self.updates_seen,
                msg: format!(
                    "update magnitude {} exceeds declared bound {}",
                    v, self.config.max_increment
                ),
            });
        }
        if self.updates_seen == self.config.m {
            return Err(Error::ModelViolation {
                position: self.updates_seen,
                msg: format!(
                    "stream exceeds declared length bound m = {}; the \
                     counter overflow budget no longer holds",
                    self.config.m
                ),
            });
        }
        self.updates_seen += 1;
        self.generator
            .accumulate_all(i, v, &mut self.counters, &mut self.scratch);
        Ok(())
    }

    /// Estimates `‖a‖_p`.
    pub fn estimate(&self) -> LpEstimate {
        let delta = self.generator.params().delta;
        let median_units = lower_median_abs(&self.counters);
        if median_units == 0 {
            return LpEstimate {
                value: 0.0,
                used_fallback: false,
            };
        }
        let a = median_units as f64 * delta;
        let r = self.counters.len() as f64;
        let c = self
            .counters
            .iter()
            .map(|&u| ((u as f64 * delta) / a).cos())
            .sum::<f64>()
            / r;
        if c > 0.0 && c < 1.0 {
            LpEstimate {
                value: a * (-c.ln()).powf(1.0 / self.config.p),
                used_fallback: false,
            }
        } else {
            LpEstimate {
                value: a * self.fallback_scale,
                used_fallback: true,
            }
        }
    }

    /// Merges two shard sketches into the sketch of the concatenated stream.
    ///
    /// Requires byte-identical headers (config and master seed) and a
    /// combined stream length within the declared bound.
    pub fn merge(&self, other: &LpSketch) -> Result<LpSketch> {
        if self.header_bytes() != other.header_bytes() {
            return Err(Error::MergeMismatch(
                "sketches built with different config or master seed".into(),
            ));
        }
        let combined = self.updates_seen + other.updates_seen;
        if combined > self.config.m {
            return Err(Error::MergeMismatch(format!(
                "combined stream length {combined} exceeds declared bound {}",
                self.config.m
            )));
        }
        let mut out = self.clone();
        out.updates_seen = combined;
        for (a, &b) in out.counters.iter_mut().zip(&other.counters) {
            *a = a.checked_add(b).ok_or_else(|| {
                Error::CounterOverflow("counter overflow during merge".into())
            })?;
        }
        Ok(out)
    }

    /// Serialized header: format tag, config, and master seed. Two sketches
    /// are mergeable exactly when their headers are byte-equal.
    pub fn header_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(72);
        out.extend_from_slice(&SERIAL_MAGIC.to_le_bytes());
        out.extend_from_slice(&SERIAL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.p.to_le_bytes());
        out.extend_from_slice(&self.config.eps.to_le_bytes());
        out.extend_from_slice(&self.config.n.to_le_bytes());
        out.extend_from_slice(&self.config.m.to_le_bytes());
        out.extend_from_slice(&self.config.max_increment.to_le_bytes());
        out.extend_from_slice(&self.config.rows_coefficient.to_le_bytes());
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        out
    }

    /// Serializes the sketch: header, update count, then the counters
    /// little-endian.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        out.extend_from_slice(&self.updates_seen.to_le_bytes());
        out.extend_from_slice(&(self.counters.len() as u64).to_le_bytes());
        for &c in &self.counters {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    /// Reconstructs a sketch from [`LpSketch::serialize`] output.
    pub fn deserialize(bytes: &[u8]) -> Result<LpSketch> {
        let mut r = Reader::new(bytes);
        if r.u32()? != SERIAL_MAGIC {
            return Err(Error::Deserialize("bad magic".into()));
        }
        if r.u32()? != SERIAL_VERSION {
            return Err(Error::Deserialize("unsupported version".into()));
        }
        let config = LpConfig {
            p: r.f64()?,
            eps: r.f64()?,
            n: r.u64()?,
            m: r.u64()?,
            max_increment: r.u64()?,
            rows_coefficient: r.f64()?,
        };
        let master_seed = r.u64()?;
        let updates_seen = r.u64()?;
        let count = r.u64()? as usize;
        let mut sketch = LpSketch::new(config, master_seed)?;
        if count != sketch.counters.len() {
            return Err(Error::Deserialize(format!(
                "counter count {count} does not match config (expected {})",
                sketch.counters.len()
            )));
        }
        for c in sketch.counters.iter_mut() {
            *c = r.i128()?;
        }
        r.finish()?;
        sketch.updates_seen = updates_seen;
        Ok(sketch)
    }

    /// Bytes of resident sketch state (counters, tables, seed material).
    pub fn state_bytes(&self) -> usize {
        self.counters.len() * std::mem::size_of::<i128>() + self.generator.state_bytes()
    }
}

/// Median of |X| for the p-stable distribution, estimated once from a fixed
/// seed; accurate to well under a percent, which is ample for a
/// constant-factor fallback.
fn median_abs_variate(p: f64) -> f64 {
    use rand::Rng;
    let mut rng = crate::seeds::rng_from(crate::seeds::split(
        CALIBRATION_SEED,
        crate::seeds::tags::LP_TABLE,
        p.to_bits(),
    ));
    let mut draws: Vec<f64> = (0..CALIBRATION_DRAWS)
        .map(|_| {
            let u: f64 = rng.gen_range(1e-12..1.0);
            let theta = (rng.gen_range(1e-12..1.0) - 0.5) * std::f64::consts::PI;
            crate::stable::cms_sample(p, u, theta)
                .expect("calibration inputs are interior")
                .abs()
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    draws[CALIBRATION_DRAWS / 2]
}

/// Lower median of the absolute counter values (the ⌈r/2⌉-th smallest).
fn lower_median_abs(counters: &[i128]) -> u128 {
    let mut mags: Vec<u128> = counters.iter().map(|c| c.unsigned_abs()).collect();
    let idx = (mags.len() - 1) / 2;
    let (_, med, _) = mags.select_nth_unstable(idx);
    *med
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn small_config() -> LpConfig {
        LpConfig::new(1.0, 0.25, 1 << 20, 10_000, 100)
    }

    #[test]
    fn config_validation() {
        assert!(LpConfig::new(0.0, 0.1, 10, 1000, 5).validate().is_err());
        assert!(LpConfig::new(2.0, 0.1, 10, 1000, 5).validate().is_err());
        assert!(LpConfig::new(1.0, 0.0, 10, 1000, 5).validate().is_err());
        assert!(LpConfig::new(1.0, 1.0, 10, 1000, 5).validate().is_err());
        // accuracy finer than 1/√m is rejected
        assert!(LpConfig::new(1.0, 0.01, 10, 100, 5).validate().is_err());
        assert!(small_config().validate().is_ok());
        // row floor
        let mut skinny = LpConfig::new(1.0, 0.9, 10, 1000, 5);
        skinny.rows_coefficient = 0.5;
        assert!(skinny.validate().is_err());
    }

    #[test]
    fn row_count_formula() {
        let c = LpConfig::new(1.0, 0.1, 1 << 20, 100_000, 100);
        assert_eq!(c.rows(), 800);
        assert_eq!(c.hash_k(), 4);
        assert_eq!(c.effective_n(), 100_000);
    }

    #[test]
    fn fresh_sketch_estimates_zero() {
        let s = LpSketch::new(small_config(), 99).unwrap();
        assert!(s.counters.iter().all(|&c| c == 0));
        let e = s.estimate();
        assert_eq!(e.value, 0.0);
        assert!(!e.used_fallback);
    }

    #[test]
    fn same_seed_identical_serialization() {
        let a = LpSketch::new(small_config(), 7).unwrap();
        let b = LpSketch::new(small_config(), 7).unwrap();
        assert_eq!(a.serialize(), b.serialize());
        let c = LpSketch::new(small_config(), 8).unwrap();
        assert_ne!(a.serialize(), c.serialize());
    }

    #[test]
    fn insert_then_delete_restores_counters() {
        let mut s = LpSketch::new(small_config(), 3).unwrap();
        s.update(42, 17).unwrap();
        let before = s.counters.clone();
        s.update(1000, 9).unwrap();
        s.update(1000, -9).unwrap();
        assert_eq!(s.counters, before);
    }

    #[test]
    fn update_order_is_irrelevant() {
        let mut rng = crate::seeds::rng_from(77);
        let updates: Vec<(u64, i64)> = (0..60)
            .map(|_| (rng.gen_range(0..1000), rng.gen_range(-50..=50)))
            .collect();
        let mut shuffled = updates.clone();
        shuffled.shuffle(&mut rng);

        let mut s1 = LpSketch::new(small_config(), 5).unwrap();
        let mut s2 = LpSketch::new(small_config(), 5).unwrap();
        for &(i, v) in &updates {
            s1.update(i, v).unwrap();
        }
        for &(i, v) in &shuffled {
            s2.update(i, v).unwrap();
        }
        assert_eq!(s1.counters, s2.counters);
    }

    #[test]
    fn single_update_scales_the_variate_row() {
        let mut s = LpSketch::new(small_config(), 11).unwrap();
        s.update(7, 3).unwrap();
        for j in 0..s.config().rows() {
            assert_eq!(s.counter_units(j), 3 * s.generator().entry_units(7, j));
        }
    }

    #[test]
    fn integer_scaling_is_exact() {
        let mut s1 = LpSketch::new(small_config(), 13).unwrap();
        let mut s5 = LpSketch::new(small_config(), 13).unwrap();
        let mut rng = crate::seeds::rng_from(1234);
        for _ in 0..40 {
            let i = rng.gen_range(0..500u64);
            let v = rng.gen_range(-20..=20i64);
            s1.update(i, v).unwrap();
            s5.update(i, 5 * v).unwrap();
        }
        for j in 0..s1.config().rows() {
            assert_eq!(5 * s1.counter_units(j), s5.counter_units(j));
        }
    }

    #[test]
    fn negating_the_stream_leaves_the_estimate_unchanged() {
        let mut s = LpSketch::new(small_config(), 21).unwrap();
        let mut neg = LpSketch::new(small_config(), 21).unwrap();
        let mut rng = crate::seeds::rng_from(4321);
        for _ in 0..50 {
            let i = rng.gen_range(0..800u64);
            let v = rng.gen_range(1..=30i64);
            s.update(i, v).unwrap();
            neg.update(i, -v).unwrap();
        }
        assert_eq!(s.estimate(), neg.estimate());
    }

    #[test]
    fn merge_identity_inverse_and_concatenation() {
        let mut rng = crate::seeds::rng_from(555);
        let stream: Vec<(u64, i64)> = (0..200)
            .map(|_| (rng.gen_range(0..2000), rng.gen_range(-40..=40)))
            .collect();

        let empty = LpSketch::new(small_config(), 2).unwrap();
        let mut full = LpSketch::new(small_config(), 2).unwrap();
        let mut first = LpSketch::new(small_config(), 2).unwrap();
        let mut second = LpSketch::new(small_config(), 2).unwrap();
        let mut inverse = LpSketch::new(small_config(), 2).unwrap();
        for (pos, &(i, v)) in stream.iter().enumerate() {
            full.update(i, v).unwrap();
            if pos < 100 {
                first.update(i, v).unwrap();
            } else {
                second.update(i, v).unwrap();
            }
            inverse.update(i, -v).unwrap();
        }

        assert_eq!(full.merge(&empty).unwrap().counters, full.counters);
        assert!(full
            .merge(&inverse)
            .unwrap()
            .counters
            .iter()
            .all(|&c| c == 0));
        assert_eq!(first.merge(&second).unwrap().counters, full.counters);

        let other_seed = LpSketch::new(small_config(), 3).unwrap();
        assert!(matches!(
            full.merge(&other_seed),
            Err(Error::MergeMismatch(_))
        ));
    }

    #[test]
    fn serialization_round_trip() {
        let mut s = LpSketch::new(small_config(), 31).unwrap();
        for i in 0..50 {
            s.update(i * 7 % 999, (i as i64 % 13) - 6).unwrap();
        }
        let bytes = s.serialize();
        let back = LpSketch::deserialize(&bytes).unwrap();
        assert_eq!(back.counters, s.counters);
        assert_eq!(back.updates_seen, s.updates_seen);
        assert_eq!(back.estimate(), s.estimate());

        let mut corrupt = bytes.clone();
        corrupt[0] ^= 0xFF;
        assert!(LpSketch::deserialize(&corrupt).is_err());
        assert!(LpSketch::deserialize(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn declared_bounds_are_enforced() {
        let mut cfg = small_config();
        cfg.m = 20;
        let mut s = LpSketch::new(cfg, 1).unwrap();
        assert!(s.update(1 << 30, 1).is_err()); // index outside universe
        assert!(s.update(5, 101).is_err()); // magnitude above bound
        for _ in 0..20 {
            s.update(5, 1).unwrap();
        }
        assert!(matches!(
            s.update(5, 1),
            Err(Error::ModelViolation { .. })
        ));
    }

    #[test]
    fn infeasible_counter_budget_is_rejected_up_front() {
        // Heavy-tailed p with astronomical stream bounds cannot fit the
        // 128-bit counters; construction must fail loudly.
        let cfg = LpConfig::new(0.5, 0.1, 1 << 50, 1_000_000_000_000_000, 1_000_000);
        assert!(matches!(
            LpSketch::new(cfg, 1),
            Err(Error::CounterOverflow(_))
        ));
    }

    #[test]
    fn single_coordinate_norm_recovered() {
        // One coordinate of weight 5: ‖a‖_p = 5 for every p; the estimate
        // must land within ±ε in well over the guaranteed 2/3 of seeds.
        let mut successes = 0;
        for seed in 0..100u64 {
            let cfg = LpConfig::new(1.0, 0.1, 1 << 20, 100_000, 100);
            let mut s = LpSketch::new(cfg, seed).unwrap();
            s.update(123, 5).unwrap();
            let e = s.estimate();
            if (e.value - 5.0).abs() <= 0.5 {
                successes += 1;
            }
        }
        assert!(successes >= 60, "only {successes}/100 within ±10%");
    }
}
