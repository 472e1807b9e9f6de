//! Turnstile distinct-count estimation.
//!
//! Counts the coordinates with nonzero net frequency under arbitrary
//! insertions and deletions. Four cooperating pieces:
//!
//! - [`ExactSmallL0`]: a bucketed counter that reports the distinct count
//!   exactly (with high probability) while it stays tiny;
//! - [`RoughEstimator`]: a constant-factor overestimate built from a pyramid
//!   of subsampled [`ExactSmallL0`] instances, answering in O(1);
//! - [`LogEstimator`]: an occupancy-based `(1 ± ε)` estimator valid under a
//!   promise that the distinct count is small relative to its bin budget;
//! - [`L0FullSketch`]: the combination accurate at every scale, routing each
//!   index to a geometric subsampling level and letting the rough estimate
//!   pick which level's occupancy estimator to read.
//!
//! [`two_pass_estimate`] replays a stream twice so that only the one
//! occupancy estimator selected by the first pass is ever materialized.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hashing::{lsb, sample_prime, KWiseHash, PairwiseHash, UniverseReducer};
use crate::numerics::{estimate_from_occupancy, occupancy_inversion, FastLogTable};
use crate::seeds::{rng_from, split, tags};
use crate::serial::Reader;

/// Default failure probability of one [`ExactSmallL0`] report.
pub const ESL0_DEFAULT_ETA: f64 = 1.0 / 16.0;
/// Bucket-side capacity used by the rough estimator's per-level counters.
pub const ROUGH_CAPACITY: u64 = 141;
/// Number of independent rough-estimator copies combined by a median.
pub const ROUGH_COPIES: usize = 5;
/// A level is considered populated when its exact counter reports more than
/// this many distinct survivors.
pub const ROUGH_REPORT_THRESHOLD: u64 = 8;
/// Reported estimate when no level is populated.
pub const ROUGH_EMPTY_ESTIMATE: u64 = 55;
/// Scale applied to 2^level for the rough estimate.
pub const ROUGH_SCALE: u64 = 220;
/// Occupancy counts up to this value are reported verbatim (they are exact
/// whenever no two live indices share a bin).
pub const EXACT_REPORT_MAX: u64 = 100;
/// Default divisor from the target accuracy ε to the internal accuracy ε′ of
/// the occupancy estimators; absorbs the constant-factor slack of the rough
/// estimate so that the selected subsampling level keeps enough survivors.
pub const DEFAULT_SLACK: f64 = 8.0;
/// Conservative slack from the worst-case analysis; far more memory-hungry
/// than [`DEFAULT_SLACK`] at no observed accuracy benefit.
pub const ANALYSIS_SLACK: f64 = 420.0;

/// Small prime window for the exact counter's bucket arithmetic.
const P_SMALL_LO: u64 = 1 << 16;
const P_SMALL_HI: u64 = 1 << 17;
/// Numerator of the collision-avoidance domain `b/ε′⁴` the index universe is
/// first folded into.
const H3_NUMERATOR: f64 = 4.0;
/// Largest occupancy modulus the u64/u128 mixed arithmetic supports.
const MAX_OCCUPANCY_MODULUS: f64 = 9.0e18;

/// Serialization magic "L0SK" and format version.
const SERIAL_MAGIC: u32 = 0x4C30_534B;
const SERIAL_VERSION: u32 = 1;

/// Lower median (the ⌈len/2⌉-th smallest element).
fn lower_median_u64(mut vals: Vec<u64>) -> u64 {
    let idx = (vals.len() - 1) / 2;
    let (_, med, _) = vals.select_nth_unstable(idx);
    *med
}

// ---------------------------------------------------------------------------
// ExactSmallL0
// ---------------------------------------------------------------------------

/// Reports the exact number of distinct live indices while that number stays
/// at or below a configured capacity.
///
/// Each of `T` independent trials hashes indices pairwise into `capacity²`
/// buckets holding frequency sums modulo a small prime. While at most
/// `capacity` indices are live, a trial is collision-free with probability
/// ≥ 1/2, in which case its nonzero-bucket count equals the distinct count
/// exactly; collisions and modular wraparound can only lower it. The report
/// is therefore the maximum over trials and is correct with probability
/// ≥ 1 − η.
#[derive(Debug, Clone)]
pub struct ExactSmallL0 {
    capacity: u64,
    eta: f64,
    trials: usize,
    buckets_per_trial: usize,
    universe: u64,
    modulus: u64,
    seed: u64,
    hashes: Vec<PairwiseHash>,
    /// Trial-major flat bucket array, `trials × capacity²` entries.
    counters: Vec<u32>,
    /// Incrementally maintained nonzero-bucket count per trial.
    nonzero: Vec<u32>,
}

impl ExactSmallL0 {
    /// Builds a counter for up to `capacity` distinct indices from a universe
    /// of `universe` indices, with failure probability `eta` and bucket
    /// arithmetic modulo the supplied prime.
    pub fn new(capacity: u64, eta: f64, universe: u64, modulus: u64, seed: u64) -> Result<Self> {
        if capacity == 0 || capacity > 4096 {
            return Err(Error::InvalidParam(format!(
                "exact-counter capacity must lie in [1, 4096], got {capacity}"
            )));
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParam(format!(
                "failure probability must lie in (0, 1), got {eta}"
            )));
        }
        if universe == 0 {
            return Err(Error::InvalidParam("universe must be ≥ 1".into()));
        }
        if !(P_SMALL_LO..=P_SMALL_HI).contains(&modulus) || !crate::hashing::is_prime_u64(modulus) {
            return Err(Error::InvalidParam(format!(
                "bucket modulus must be a prime in [{P_SMALL_LO}, {P_SMALL_HI}], got {modulus}"
            )));
        }
        // Each trial halves the failure probability twice over.
        let halvings = (1.0 / eta).log2().ceil() as usize;
        let trials = (2 * halvings).max(1);
        let buckets_per_trial = (capacity * capacity) as usize;
        let hashes = (0..trials)
            .map(|t| {
                PairwiseHash::new(
                    universe,
                    buckets_per_trial as u64,
                    split(seed, tags::ROUGH_TRIAL, t as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            capacity,
            eta,
            trials,
            buckets_per_trial,
            universe,
            modulus,
            seed,
            hashes,
            counters: vec![0; trials * buckets_per_trial],
            nonzero: vec![0; trials],
        })
    }

    /// Convenience constructor that also samples the bucket prime from the
    /// seed.
    pub fn with_sampled_modulus(capacity: u64, eta: f64, universe: u64, seed: u64) -> Result<Self> {
        let modulus = Self::sample_modulus(seed)?;
        Self::new(capacity, eta, universe, modulus, seed)
    }

    /// Samples the shared bucket prime for a family of exact counters.
    pub fn sample_modulus(seed: u64) -> Result<u64> {
        let mut rng = rng_from(split(seed, tags::ROUGH_PRIME, 0));
        sample_prime(P_SMALL_LO, P_SMALL_HI, &mut rng)
    }

    /// Declared capacity (exactness holds while the distinct count is ≤ this).
    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    /// Number of independent trials.
    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Applies a signed frequency update to index `i`.
    pub fn update(&mut self, i: u64, v: i64) -> Result<()> {
        if i >= self.universe {
            return Err(Error::OutOfDomain {
                x: i,
                domain: self.universe,
            });
        }
        self.apply(i, v);
        Ok(())
    }

    /// Domain-unchecked update (callers validate `i` once per stream update).
    fn apply(&mut self, i: u64, v: i64) {
        let m = self.modulus as u32;
        let vm = v.rem_euclid(self.modulus as i64) as u32;
        for t in 0..self.trials {
            let b = self.hashes[t].eval_unchecked(i) as usize;
            let idx = t * self.buckets_per_trial + b;
            let old = self.counters[idx];
            let mut new = old + vm;
            if new >= m {
                new -= m;
            }
            self.counters[idx] = new;
            if old == 0 && new != 0 {
                self.nonzero[t] += 1;
            } else if old != 0 && new == 0 {
                self.nonzero[t] -= 1;
            }
        }
    }

    /// Set-semantics update for insertion-only distinct counting: marks
    /// index `i` present by raising its bucket in every trial to 1.
    /// Duplicate marks are bytewise no-ops, so the bucket state depends only
    /// on the *set* of marked indices, and the report keeps the same
    /// exactness guarantee (nonzero buckets count distinct indices while
    /// within capacity).
    pub(crate) fn mark(&mut self, i: u64) {
        for t in 0..self.trials {
            let b = self.hashes[t].eval_unchecked(i) as usize;
            let idx = t * self.buckets_per_trial + b;
            if self.counters[idx] == 0 {
                self.counters[idx] = 1;
                self.nonzero[t] += 1;
            }
        }
    }

    /// Current report: the maximum nonzero-bucket count over trials. Equals
    /// the exact distinct count with probability ≥ 1 − η while that count is
    /// within capacity. O(trials).
    pub fn report(&self) -> u64 {
        *self.nonzero.iter().max().expect("at least one trial") as u64
    }

    /// Whether the report exceeds the population threshold used by the rough
    /// estimator's level bitmap.
    pub fn over_threshold(&self) -> bool {
        self.report() > ROUGH_REPORT_THRESHOLD
    }

    /// Merges two counters fed by disjoint (or overlapping) shards of one
    /// logical stream; both must share every parameter and the seed.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.capacity != other.capacity
            || self.eta.to_bits() != other.eta.to_bits()
            || self.universe != other.universe
            || self.modulus != other.modulus
            || self.seed != other.seed
        {
            return Err(Error::MergeMismatch(
                "exact-counter parameters or seed differ".into(),
            ));
        }
        let mut out = self.clone();
        let m = self.modulus as u32;
        for (c, &o) in out.counters.iter_mut().zip(&other.counters) {
            let mut s = *c + o;
            if s >= m {
                s -= m;
            }
            *c = s;
        }
        out.recount();
        Ok(out)
    }

    /// Merges two set-semantics counters (fed via [`ExactSmallL0::mark`]) by
    /// bucket-wise maximum, which for 0/1 buckets is set union and therefore
    /// idempotent.
    pub(crate) fn or_merge(&self, other: &Self) -> Result<Self> {
        if self.capacity != other.capacity
            || self.eta.to_bits() != other.eta.to_bits()
            || self.universe != other.universe
            || self.modulus != other.modulus
            || self.seed != other.seed
        {
            return Err(Error::MergeMismatch(
                "exact-counter parameters or seed differ".into(),
            ));
        }
        let mut out = self.clone();
        for (c, &o) in out.counters.iter_mut().zip(&other.counters) {
            *c = (*c).max(o);
        }
        out.recount();
        Ok(out)
    }

    /// Rebuilds the per-trial nonzero counts from the raw buckets.
    fn recount(&mut self) {
        for t in 0..self.trials {
            let start = t * self.buckets_per_trial;
            self.nonzero[t] = self.counters[start..start + self.buckets_per_trial]
                .iter()
                .filter(|&&c| c != 0)
                .count() as u32;
        }
    }

    /// Overwrites the bucket array (deserialization path) and recounts.
    fn restore_counters(&mut self, vals: Vec<u32>) -> Result<()> {
        if vals.len() != self.counters.len() {
            return Err(Error::Deserialize(format!(
                "bucket count {} does not match configuration (expected {})",
                vals.len(),
                self.counters.len()
            )));
        }
        if vals.iter().any(|&c| c >= self.modulus as u32) {
            return Err(Error::Deserialize(
                "bucket value outside the counter field".into(),
            ));
        }
        self.counters = vals;
        self.recount();
        Ok(())
    }

    /// Bytes of resident state.
    pub fn state_bytes(&self) -> usize {
        self.counters.len() * 4 + self.nonzero.len() * 4 + self.trials * 2 * 8 + 64
    }
}

// ---------------------------------------------------------------------------
// RoughEstimator
// ---------------------------------------------------------------------------

/// One independent copy of the rough-estimator pyramid.
#[derive(Debug, Clone)]
struct RoughCopy {
    route: PairwiseHash,
    levels: Vec<ExactSmallL0>,
    /// Bit `j` is set exactly when `levels[j]` reports more than
    /// [`ROUGH_REPORT_THRESHOLD`] survivors.
    z: u64,
}

/// Constant-factor distinct-count overestimate with O(1) query time.
///
/// Each copy routes index `i` to subsampling level `lsb(h(i))` of a pyramid
/// of exact counters; level `j` sees each live index with probability
/// `2^{−(j+1)}`, so the deepest populated level locates `log₂ L₀` to within a
/// constant. The estimate is `220 · 2^level` (or a small floor when every
/// level is quiet), medianed over five independent copies. With the stated
/// constants the result lands in `[L₀, 110·L₀]` with probability ≥ 95%.
#[derive(Debug, Clone)]
pub struct RoughEstimator {
    universe: u64,
    depth_range: u64,
    seed: u64,
    modulus: u64,
    copies: Vec<RoughCopy>,
}

/// Maps a level bitmap to the rough estimate it encodes: the deepest set bit
/// `j` yields `220·2^j` (saturating), an empty bitmap the floor value.
fn estimate_from_bits(z: u64) -> u64 {
    if z == 0 {
        return ROUGH_EMPTY_ESTIMATE;
    }
    let top = 63 - z.leading_zeros();
    ((ROUGH_SCALE as u128) << top).min(u64::MAX as u128) as u64
}

impl RoughEstimator {
    /// Builds the estimator for indices in `[0, universe)` and an effective
    /// stream-length bound `depth_range` (which caps the useful subsampling
    /// depth at `⌊log₂ depth_range⌋`).
    pub fn new(universe: u64, depth_range: u64, seed: u64) -> Result<Self> {
        if universe == 0 || depth_range == 0 {
            return Err(Error::InvalidParam(
                "universe and depth range must be ≥ 1".into(),
            ));
        }
        let levels = depth_range.ilog2() as usize + 1;
        let modulus = ExactSmallL0::sample_modulus(split(seed, tags::ROUGH_PRIME, 0))?;
        let copies = (0..ROUGH_COPIES)
            .map(|c| {
                let copy_seed = split(seed, tags::ROUGH_COPY, c as u64);
                let route = PairwiseHash::new(
                    universe,
                    depth_range,
                    split(copy_seed, tags::L0_LEVEL_HASH, 0),
                )?;
                let levels = (0..levels)
                    .map(|j| {
                        ExactSmallL0::new(
                            ROUGH_CAPACITY,
                            ESL0_DEFAULT_ETA,
                            universe,
                            modulus,
                            split(copy_seed, tags::ROUGH_TRIAL, j as u64),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(RoughCopy {
                    route,
                    levels,
                    z: 0,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            universe,
            depth_range,
            seed,
            modulus,
            copies,
        })
    }

    /// Number of independent copies medianed by [`RoughEstimator::estimate`].
    pub fn copy_count(&self) -> usize {
        self.copies.len()
    }

    /// Subsampling levels per copy.
    pub fn level_count(&self) -> usize {
        self.copies[0].levels.len()
    }

    /// Applies a signed frequency update to index `i`.
    pub fn update(&mut self, i: u64, v: i64) -> Result<()> {
        if i >= self.universe {
            return Err(Error::OutOfDomain {
                x: i,
                domain: self.universe,
            });
        }
        self.apply(i, v);
        Ok(())
    }

    /// Domain-unchecked update.
    pub(crate) fn apply(&mut self, i: u64, v: i64) {
        for copy in &mut self.copies {
            let deepest = copy.levels.len() - 1;
            let j = (lsb(copy.route.eval_unchecked(i)) as usize).min(deepest);
            copy.levels[j].apply(i, v);
            let over = copy.levels[j].over_threshold();
            copy.z = (copy.z & !(1u64 << j)) | ((over as u64) << j);
        }
    }

    /// Set-semantics update for insertion-only distinct counting: marks `i`
    /// present at its routed level in every copy. Duplicate marks leave the
    /// state bytewise unchanged.
    pub(crate) fn mark(&mut self, i: u64) {
        for copy in &mut self.copies {
            let deepest = copy.levels.len() - 1;
            let j = (lsb(copy.route.eval_unchecked(i)) as usize).min(deepest);
            copy.levels[j].mark(i);
            let over = copy.levels[j].over_threshold();
            copy.z = (copy.z & !(1u64 << j)) | ((over as u64) << j);
        }
    }

    /// Merges two set-semantics estimators (fed via [`RoughEstimator::mark`])
    /// by bucket-wise union; idempotent, so merging a sketch with itself is a
    /// no-op.
    pub(crate) fn or_merge(&self, other: &Self) -> Result<Self> {
        if self.universe != other.universe
            || self.depth_range != other.depth_range
            || self.seed != other.seed
            || self.modulus != other.modulus
        {
            return Err(Error::MergeMismatch(
                "rough-estimator parameters or seed differ".into(),
            ));
        }
        let mut out = self.clone();
        for (copy, ocopy) in out.copies.iter_mut().zip(&other.copies) {
            for (lvl, olvl) in copy.levels.iter_mut().zip(&ocopy.levels) {
                *lvl = lvl.or_merge(olvl)?;
            }
        }
        out.rebuild_flags();
        Ok(out)
    }

    /// Median over copies of the per-copy estimates; O(copies) because the
    /// level bitmaps are maintained incrementally.
    pub fn estimate(&self) -> u64 {
        lower_median_u64(self.copies.iter().map(|c| estimate_from_bits(c.z)).collect())
    }

    /// Merges two estimators fed by shards of one logical stream.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.universe != other.universe
            || self.depth_range != other.depth_range
            || self.seed != other.seed
            || self.modulus != other.modulus
        {
            return Err(Error::MergeMismatch(
                "rough-estimator parameters or seed differ".into(),
            ));
        }
        let mut out = self.clone();
        for (copy, ocopy) in out.copies.iter_mut().zip(&other.copies) {
            for (lvl, olvl) in copy.levels.iter_mut().zip(&ocopy.levels) {
                *lvl = lvl.merge(olvl)?;
            }
        }
        out.rebuild_flags();
        Ok(out)
    }

    /// Recomputes every copy's level bitmap from the level reports.
    fn rebuild_flags(&mut self) {
        for copy in &mut self.copies {
            copy.z = 0;
            for (j, lvl) in copy.levels.iter().enumerate() {
                copy.z |= (lvl.over_threshold() as u64) << j;
            }
        }
    }

    /// Appends every bucket array (length-prefixed little-endian) to `out`.
    pub(crate) fn write_state(&self, out: &mut Vec<u8>) {
        for copy in &self.copies {
            for lvl in &copy.levels {
                crate::serial::push_u32_slice(out, &lvl.counters);
            }
        }
    }

    /// Restores every bucket array from `r` (inverse of `write_state`) and
    /// rebuilds the level bitmaps.
    pub(crate) fn read_state(&mut self, r: &mut Reader) -> Result<()> {
        for copy in self.copies.iter_mut() {
            for lvl in copy.levels.iter_mut() {
                lvl.restore_counters(crate::serial::read_u32_vec(r)?)?;
            }
        }
        self.rebuild_flags();
        Ok(())
    }

    /// Bytes of resident state.
    pub fn state_bytes(&self) -> usize {
        self.copies
            .iter()
            .map(|c| c.levels.iter().map(ExactSmallL0::state_bytes).sum::<usize>() + 2 * 8 + 8)
            .sum::<usize>()
            + 64
    }
}

// ---------------------------------------------------------------------------
// LogEstimator
// ---------------------------------------------------------------------------

/// Randomness and lookup state shared by every [`LogEstimator`] of one
/// sketch: the universe fold, both bin hashes, the random field vector, and
/// the occupancy log table. Sharing makes level estimators interchangeable —
/// two estimators fed the same substream hold identical counters.
#[derive(Debug)]
pub struct LeShared {
    eps_prime: f64,
    kprime: u64,
    universe: u64,
    stream_bound: u64,
    max_increment: u64,
    modulus: u64,
    seed: u64,
    reducer: UniverseReducer,
    bin_hash: KWiseHash,
    vec_hash: PairwiseHash,
    field_vec: Vec<u64>,
    table: FastLogTable,
}

impl LeShared {
    /// Derives the shared randomness for accuracy `eps_prime`, index universe
    /// `universe`, and a stream of at most `stream_bound` updates of
    /// magnitude at most `max_increment`.
    pub fn new(
        eps_prime: f64,
        universe: u64,
        stream_bound: u64,
        max_increment: u64,
        seed: u64,
    ) -> Result<Self> {
        if !(eps_prime > 0.0 && eps_prime < 0.5) {
            return Err(Error::InvalidParam(format!(
                "occupancy accuracy must lie in (0, 0.5), got {eps_prime}"
            )));
        }
        if universe == 0 || stream_bound == 0 || max_increment == 0 {
            return Err(Error::InvalidParam(
                "universe, stream bound, and max increment must be ≥ 1".into(),
            ));
        }
        let volume = stream_bound as f64 * max_increment as f64;
        if volume < 4.0 {
            return Err(Error::InvalidParam(
                "stream volume m·M must be at least 4".into(),
            ));
        }
        let eps2 = eps_prime * eps_prime;
        let kprime = (1.0 / eps2).ceil() as u64;
        // The counter modulus is a random prime from [D, D²]; any fixed
        // nonzero frequency (|a_i| ≤ m·M) is divisible by few primes that
        // large, so a random choice rarely zeroes a live bin.
        let d = volume.log2() / eps2;
        if d * d > MAX_OCCUPANCY_MODULUS {
            return Err(Error::InvalidParam(format!(
                "occupancy modulus window [{d:.3e}, {:.3e}] exceeds supported arithmetic range",
                d * d
            )));
        }
        let lo = (d.ceil() as u64).max(3);
        let hi = (d * d).floor() as u64;
        let modulus = sample_prime(lo, hi, &mut rng_from(split(seed, tags::L0_PRIME, 0)))?;
        let fold_range = (H3_NUMERATOR / (eps2 * eps2)).ceil();
        if fold_range > crate::hashing::MERSENNE_61 as f64 {
            return Err(Error::InvalidParam(format!(
                "collision-avoidance range {fold_range:.3e} exceeds the hash field"
            )));
        }
        let reducer = UniverseReducer::new(
            universe,
            stream_bound,
            fold_range as u64,
            split(seed, tags::L0_H3, 0),
        )?;
        let degree = ((1.0 / eps_prime).log2().ceil() as u32).max(2);
        let bin_hash = KWiseHash::new(
            degree,
            reducer.range_size(),
            kprime,
            split(seed, tags::L0_H1, 0),
        )?;
        let vec_hash = PairwiseHash::new(reducer.range_size(), kprime, split(seed, tags::L0_H2, 0))?;
        let mut rng = rng_from(split(seed, tags::L0_FIELD_VEC, 0));
        let field_vec = (0..kprime).map(|_| rng.gen_range(0..modulus)).collect();
        let table = FastLogTable::new(kprime, eps_prime)?;
        Ok(Self {
            eps_prime,
            kprime,
            universe,
            stream_bound,
            max_increment,
            modulus,
            seed,
            reducer,
            bin_hash,
            vec_hash,
            field_vec,
            table,
        })
    }

    /// Number of occupancy bins K′.
    pub fn kprime(&self) -> u64 {
        self.kprime
    }

    /// Counter field modulus.
    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Accuracy parameter ε′.
    pub fn eps_prime(&self) -> f64 {
        self.eps_prime
    }

    /// Whether two shared-randomness bundles are interchangeable (same
    /// parameters and seed, hence bitwise-identical derived state).
    fn same_randomness(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.eps_prime.to_bits() == other.eps_prime.to_bits()
            && self.universe == other.universe
            && self.stream_bound == other.stream_bound
            && self.max_increment == other.max_increment
            && self.modulus == other.modulus
    }

    /// Bytes of resident shared state.
    pub fn state_bytes(&self) -> usize {
        self.field_vec.len() * 8
            + self.table.entries() * 8
            + self.bin_hash.coefficients().len() * 8
            + 2 * 8 // vec_hash coefficients
            + 2 * 8 // reducer inner hash coefficients
            + 96
    }
}

/// Result of querying a [`LogEstimator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeEstimate {
    /// Estimated distinct count.
    pub value: f64,
    /// Set when the occupied-bin fraction reached 4/5 of the bins, i.e. the
    /// smallness promise this estimator relies on was violated.
    pub saturated: bool,
}

/// Occupancy-based `(1 ± ε′)` distinct-count estimator for streams whose
/// distinct count is promised to stay below `1/(20ε′²)`.
///
/// Each index is folded into a collision-avoidance domain, then hashed to one
/// of `K′ = ⌈1/ε′²⌉` bins; the bin accumulates the frequency times a random
/// field element, modulo a random large prime. A live index keeps its bin
/// nonzero unless the field arithmetic conspires (probability O(1/p)), so the
/// number of occupied bins follows the classical balls-in-bins occupancy law
/// and inverts to the distinct count.
#[derive(Debug, Clone)]
pub struct LogEstimator {
    shared: Arc<LeShared>,
    counters: Vec<u64>,
    occupied: u64,
}

impl LogEstimator {
    /// Wraps shared randomness in a fresh (all-zero) estimator.
    pub fn new(shared: Arc<LeShared>) -> Self {
        let kprime = shared.kprime as usize;
        Self {
            shared,
            counters: vec![0; kprime],
            occupied: 0,
        }
    }

    /// Builds an estimator with its own private randomness.
    pub fn standalone(
        eps_prime: f64,
        universe: u64,
        stream_bound: u64,
        max_increment: u64,
        seed: u64,
    ) -> Result<Self> {
        Ok(Self::new(Arc::new(LeShared::new(
            eps_prime,
            universe,
            stream_bound,
            max_increment,
            seed,
        )?)))
    }

    /// The randomness bundle this estimator uses.
    pub fn shared(&self) -> &Arc<LeShared> {
        &self.shared
    }

    /// Number of currently occupied (nonzero) bins.
    pub fn occupied_bins(&self) -> u64 {
        self.occupied
    }

    /// Applies a signed frequency update to index `i`.
    pub fn update(&mut self, i: u64, v: i64) -> Result<()> {
        if i >= self.shared.universe {
            return Err(Error::OutOfDomain {
                x: i,
                domain: self.shared.universe,
            });
        }
        self.apply(i, v);
        Ok(())
    }

    /// Domain-unchecked update.
    fn apply(&mut self, i: u64, v: i64) {
        let s = &self.shared;
        let folded = s.reducer.reduce(i);
        let bin = s.bin_hash.eval_unchecked(folded) as usize;
        let w = s.field_vec[s.vec_hash.eval_unchecked(folded) as usize];
        let p = s.modulus;
        let vm = v.rem_euclid(p as i64) as u64;
        let delta = ((vm as u128 * w as u128) % p as u128) as u64;
        let old = self.counters[bin];
        let mut new = old + delta;
        if new >= p {
            new -= p;
        }
        self.counters[bin] = new;
        if old == 0 && new != 0 {
            self.occupied += 1;
        } else if old != 0 && new == 0 {
            self.occupied -= 1;
        }
    }

    /// Estimates the distinct count from the occupied-bin count: verbatim
    /// while ≤ [`EXACT_REPORT_MAX`], otherwise by occupancy inversion through
    /// the log table. Saturation (≥ 4/5 of bins occupied) is flagged and
    /// falls back to the closed form, which the table does not cover there.
    pub fn estimate(&self) -> LeEstimate {
        let occ = self.occupied;
        let k = self.shared.kprime;
        let saturated = (occ as u128) * 5 >= (k as u128) * 4;
        let value = if occ <= EXACT_REPORT_MAX {
            occ as f64
        } else if !saturated {
            estimate_from_occupancy(occ, k, &self.shared.table)
                .expect("occupancy below 4K/5 is within the table domain")
        } else {
            occupancy_inversion(occ, k)
        };
        LeEstimate { value, saturated }
    }

    /// Merges two estimators fed by shards of one logical stream; bins add in
    /// the counter field, so the merged state equals the single-stream state.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if !self.shared.same_randomness(&other.shared) {
            return Err(Error::MergeMismatch(
                "occupancy-estimator randomness differs".into(),
            ));
        }
        let p = self.shared.modulus;
        let mut out = self.clone();
        for (c, &o) in out.counters.iter_mut().zip(&other.counters) {
            let mut s = *c + o;
            if s >= p {
                s -= p;
            }
            *c = s;
        }
        out.occupied = out.counters.iter().filter(|&&c| c != 0).count() as u64;
        Ok(out)
    }

    /// Overwrites the bin array (deserialization path) and recounts.
    fn restore_counters(&mut self, vals: Vec<u64>) -> Result<()> {
        if vals.len() != self.counters.len() {
            return Err(Error::Deserialize(format!(
                "bin count {} does not match configuration (expected {})",
                vals.len(),
                self.counters.len()
            )));
        }
        if vals.iter().any(|&c| c >= self.shared.modulus) {
            return Err(Error::Deserialize(
                "bin value outside the counter field".into(),
            ));
        }
        self.counters = vals;
        self.occupied = self.counters.iter().filter(|&&c| c != 0).count() as u64;
        Ok(())
    }

    /// Bytes of per-instance state (the shared bundle is counted by its
    /// owner).
    pub fn state_bytes(&self) -> usize {
        self.counters.len() * 8 + 16
    }
}

// ---------------------------------------------------------------------------
// L0FullSketch
// ---------------------------------------------------------------------------

/// Configuration of the combined turnstile distinct-count sketch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L0Config {
    /// Target relative accuracy, in (0, 1).
    pub eps: f64,
    /// Universe size: stream indices must satisfy `i < n`.
    pub n: u64,
    /// Upper bound on the number of stream updates.
    pub m: u64,
    /// Upper bound on the magnitude of a single update.
    pub max_increment: u64,
    /// Divisor from ε to the internal occupancy accuracy ε′ = ε/slack.
    pub slack: f64,
}

impl L0Config {
    /// Configuration with the default slack.
    pub fn new(eps: f64, n: u64, m: u64, max_increment: u64) -> Self {
        Self {
            eps,
            n,
            m,
            max_increment,
            slack: DEFAULT_SLACK,
        }
    }

    /// Replaces the slack divisor.
    pub fn with_slack(mut self, slack: f64) -> Self {
        self.slack = slack;
        self
    }

    /// Switches to the conservative worst-case slack.
    pub fn with_analysis_constants(self) -> Self {
        self.with_slack(ANALYSIS_SLACK)
    }

    /// Internal occupancy accuracy ε′ = ε/slack.
    pub fn eps_prime(&self) -> f64 {
        self.eps / self.slack
    }

    /// Occupancy bins per estimator, `⌈1/ε′²⌉`.
    pub fn kprime(&self) -> u64 {
        let e = self.eps_prime();
        (1.0 / (e * e)).ceil() as u64
    }

    /// Effective number of live indices the stream can produce, `min(n, m)`.
    pub fn effective_n(&self) -> u64 {
        self.n.min(self.m)
    }

    /// Deepest subsampling level carrying its own occupancy estimator:
    /// `⌈log₂(ε′²·N)⌉` clamped to ≥ 0. Deeper-sampled indices are routed to
    /// this level.
    pub fn jmax(&self) -> u32 {
        let e = self.eps_prime();
        let x = e * e * self.effective_n() as f64;
        if x <= 1.0 {
            0
        } else {
            x.log2().ceil() as u32
        }
    }

    /// Validates the configuration.
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps < 1.0) || !self.eps.is_finite() {
            return Err(Error::InvalidParam(format!(
                "accuracy eps must lie in (0, 1), got {}",
                self.eps
            )));
        }
        if !(self.slack >= 2.0) || !self.slack.is_finite() {
            return Err(Error::InvalidParam(format!(
                "slack must be a finite value ≥ 2, got {}",
                self.slack
            )));
        }
        if self.n == 0 || self.m == 0 || self.max_increment == 0 {
            return Err(Error::InvalidParam(
                "universe, stream bound, and max increment must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// Result of querying the combined sketch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L0Estimate {
    /// Estimated number of indices with nonzero net frequency.
    pub value: f64,
    /// Set when a majority of the consulted occupancy estimators were
    /// saturated, i.e. the subsampling did not thin the stream as promised.
    pub saturated: bool,
}

/// One median copy's routing hash and per-level occupancy estimators.
#[derive(Debug, Clone)]
struct LevelBank {
    route: PairwiseHash,
    levels: Vec<LogEstimator>,
}

/// Whether the rough estimate is small enough for the unsampled base
/// estimator to be read directly.
fn below_rough_cutoff(rough: u64, eps_prime: f64) -> bool {
    (rough as f64) < 1.0 / (20.0 * eps_prime * eps_prime)
}

/// Smallest level `j ≥ 0` whose `2^j`-fold thinning brings the rough
/// estimate under the per-level budget `1/(40ε′²)`.
fn select_level(rough: u64, eps_prime: f64) -> u32 {
    let budget = 1.0 / (40.0 * eps_prime * eps_prime);
    let mut j = 0u32;
    let mut scaled = rough as f64;
    while scaled > budget && j < 128 {
        scaled *= 0.5;
        j += 1;
    }
    j
}

/// Inverse sampling rate of level `j_used`: levels below the deepest see
/// exactly the indices with `lsb = j` (rate `2^{−(j+1)}`), while the deepest
/// level absorbs every deeper index (rate `2^{−jmax}`).
fn level_scale(j_used: u32, jmax: u32) -> f64 {
    if j_used == jmax {
        2f64.powi(jmax as i32)
    } else {
        2f64.powi(j_used as i32 + 1)
    }
}

/// Scales and medians the per-copy level estimates; the saturation flag is
/// propagated when a majority of copies raised it.
fn combine_level_estimates(ests: &[LeEstimate], scale: f64) -> L0Estimate {
    let mut vals: Vec<f64> = ests.iter().map(|e| e.value).collect();
    vals.sort_by(f64::total_cmp);
    L0Estimate {
        value: scale * vals[(vals.len() - 1) / 2],
        saturated: ests.iter().filter(|e| e.saturated).count() * 2 > ests.len(),
    }
}

/// Turnstile sketch estimating the number of indices with nonzero net
/// frequency to within `(1 ± ε)`, at every scale from O(1) up to the
/// universe size.
///
/// Every update feeds an unsampled base occupancy estimator and the rough
/// estimator; in addition, each of five independent copies routes the index
/// to subsampling level `lsb(h(i))` (clamped to the deepest level) and feeds
/// that level's occupancy estimator. At query time the rough estimate either
/// certifies the distinct count is small — the base estimator is accurate —
/// or selects the level whose thinning brings the count into the occupancy
/// estimators' accurate range.
#[derive(Debug, Clone)]
pub struct L0FullSketch {
    config: L0Config,
    master_seed: u64,
    jmax: u32,
    shared: Arc<LeShared>,
    base: LogEstimator,
    rough: RoughEstimator,
    banks: Vec<LevelBank>,
}

impl L0FullSketch {
    /// Builds the sketch; all randomness derives from `master_seed`.
    pub fn new(config: L0Config, master_seed: u64) -> Result<Self> {
        config.validate()?;
        let eps_prime = config.eps_prime();
        let n_eff = config.effective_n();
        let jmax = config.jmax();
        let shared = Arc::new(LeShared::new(
            eps_prime,
            config.n,
            config.m,
            config.max_increment,
            split(master_seed, tags::L0_SHARED, 0),
        )?);
        let base = LogEstimator::new(shared.clone());
        let rough = RoughEstimator::new(config.n, n_eff, split(master_seed, tags::L0_ROUGH, 0))?;
        let banks = (0..ROUGH_COPIES)
            .map(|c| {
                let route = PairwiseHash::new(
                    config.n,
                    n_eff,
                    split(master_seed, tags::L0_LEVEL_HASH, c as u64),
                )?;
                let levels = (0..=jmax).map(|_| LogEstimator::new(shared.clone())).collect();
                Ok(LevelBank { route, levels })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            master_seed,
            jmax,
            shared,
            base,
            rough,
            banks,
        })
    }

    /// Configuration this sketch was built with.
    pub fn config(&self) -> &L0Config {
        &self.config
    }

    /// Master seed this sketch was built with.
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Deepest subsampling level.
    pub fn jmax(&self) -> u32 {
        self.jmax
    }

    /// Applies a signed frequency update to index `i`.
    pub fn update(&mut self, i: u64, v: i64) -> Result<()> {
        if i >= self.config.n {
            return Err(Error::OutOfDomain {
                x: i,
                domain: self.config.n,
            });
        }
        self.base.apply(i, v);
        self.rough.apply(i, v);
        for bank in &mut self.banks {
            let j = lsb(bank.route.eval_unchecked(i)).min(self.jmax) as usize;
            bank.levels[j].apply(i, v);
        }
        Ok(())
    }

    /// The rough estimator's current constant-factor estimate.
    pub fn rough_estimate(&self) -> u64 {
        self.rough.estimate()
    }

    /// Estimates the distinct count.
    pub fn estimate(&self) -> L0Estimate {
        let eps_prime = self.config.eps_prime();
        let rough = self.rough.estimate();
        if below_rough_cutoff(rough, eps_prime) {
            let e = self.base.estimate();
            return L0Estimate {
                value: e.value,
                saturated: e.saturated,
            };
        }
        let j_used = select_level(rough, eps_prime).min(self.jmax);
        let scale = level_scale(j_used, self.jmax);
        let ests: Vec<LeEstimate> = self
            .banks
            .iter()
            .map(|b| b.levels[j_used as usize].estimate())
            .collect();
        combine_level_estimates(&ests, scale)
    }

    /// Merges two sketches fed by shards of one logical stream.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.config != other.config || self.master_seed != other.master_seed {
            return Err(Error::MergeMismatch(
                "sketch configuration or seed differs".into(),
            ));
        }
        let base = self.base.merge(&other.base)?;
        let rough = self.rough.merge(&other.rough)?;
        let banks = self
            .banks
            .iter()
            .zip(&other.banks)
            .map(|(a, b)| {
                let levels = a
                    .levels
                    .iter()
                    .zip(&b.levels)
                    .map(|(x, y)| x.merge(y))
                    .collect::<Result<Vec<_>>>()?;
                Ok(LevelBank {
                    route: a.route.clone(),
                    levels,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: self.config,
            master_seed: self.master_seed,
            jmax: self.jmax,
            shared: self.shared.clone(),
            base,
            rough,
            banks,
        })
    }

    /// Serializes the sketch (magic, version, configuration, seed, then every
    /// counter array little-endian).
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&SERIAL_MAGIC.to_le_bytes());
        out.extend_from_slice(&SERIAL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.eps.to_le_bytes());
        out.extend_from_slice(&self.config.n.to_le_bytes());
        out.extend_from_slice(&self.config.m.to_le_bytes());
        out.extend_from_slice(&self.config.max_increment.to_le_bytes());
        out.extend_from_slice(&self.config.slack.to_le_bytes());
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        crate::serial::push_u64_slice(&mut out, &self.base.counters);
        self.rough.write_state(&mut out);
        for bank in &self.banks {
            for lvl in &bank.levels {
                crate::serial::push_u64_slice(&mut out, &lvl.counters);
            }
        }
        out
    }

    /// Reconstructs a sketch from [`L0FullSketch::serialize`] output.
    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.u32()? != SERIAL_MAGIC {
            return Err(Error::Deserialize("bad magic".into()));
        }
        if r.u32()? != SERIAL_VERSION {
            return Err(Error::Deserialize("unsupported version".into()));
        }
        let config = L0Config {
            eps: r.f64()?,
            n: r.u64()?,
            m: r.u64()?,
            max_increment: r.u64()?,
            slack: r.f64()?,
        };
        let master_seed = r.u64()?;
        let mut sketch = Self::new(config, master_seed)?;
        sketch.base.restore_counters(crate::serial::read_u64_vec(&mut r)?)?;
        sketch.rough.read_state(&mut r)?;
        for bank in sketch.banks.iter_mut() {
            for lvl in bank.levels.iter_mut() {
                lvl.restore_counters(crate::serial::read_u64_vec(&mut r)?)?;
            }
        }
        r.finish()?;
        Ok(sketch)
    }

    /// Bytes held by the occupancy estimators (base, every level, and the
    /// shared randomness bundle); this is the part of the sketch that scales
    /// as 1/ε′².
    pub fn le_bytes(&self) -> usize {
        self.shared.state_bytes()
            + self.base.state_bytes()
            + self
                .banks
                .iter()
                .map(|b| b.levels.iter().map(LogEstimator::state_bytes).sum::<usize>())
                .sum::<usize>()
    }

    /// Bytes held by the rough estimator and the level-routing hashes; this
    /// part is independent of ε.
    pub fn re_bytes(&self) -> usize {
        self.rough.state_bytes() + self.banks.len() * (2 * 8 + 8)
    }

    /// Total bytes of resident sketch state.
    pub fn state_bytes(&self) -> usize {
        self.le_bytes() + self.re_bytes()
    }
}

// ---------------------------------------------------------------------------
// Two-pass estimation
// ---------------------------------------------------------------------------

/// Outcome of [`two_pass_estimate`], with instantiation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPassReport {
    /// Estimated distinct count (identical to the single-pass estimate for
    /// the same configuration and seed).
    pub value: f64,
    /// Majority-saturation flag, as in [`L0Estimate`].
    pub saturated: bool,
    /// The rough estimate obtained in the first pass.
    pub rough_estimate: u64,
    /// The subsampling level read in the second pass, or `None` when the
    /// unsampled base estimator sufficed.
    pub selected_level: Option<u32>,
    /// Occupancy estimators instantiated per median copy in pass 2 (always
    /// ≤ 1; a single-pass sketch holds `jmax + 1` per copy).
    pub pass2_levels_per_copy: usize,
    /// Total occupancy estimators instantiated in pass 2.
    pub pass2_total_les: usize,
    /// Peak resident sketch bytes across the two passes (pass 1 holds only
    /// the rough estimator; pass 2 only the selected occupancy estimators).
    pub state_bytes: usize,
}

/// Estimates the distinct count of a replayable stream in two passes: the
/// first feeds only the rough estimator, the second only the one occupancy
/// estimator (per median copy) that the rough estimate selects. Produces
/// bit-identical results to a single-pass [`L0FullSketch`] with the same
/// seed, while never materializing the full pyramid of level estimators.
///
/// `stream` is called once per pass and must yield the same updates each
/// time.
pub fn two_pass_estimate<F, I>(
    config: &L0Config,
    master_seed: u64,
    mut stream: F,
) -> Result<TwoPassReport>
where
    F: FnMut() -> Result<I>,
    I: IntoIterator<Item = Result<(u64, i64)>>,
{
    config.validate()?;
    let eps_prime = config.eps_prime();
    let n_eff = config.effective_n();
    let jmax = config.jmax();

    let mut rough = RoughEstimator::new(config.n, n_eff, split(master_seed, tags::L0_ROUGH, 0))?;
    for upd in stream()? {
        let (i, v) = upd?;
        rough.update(i, v)?;
    }
    let rough_est = rough.estimate();
    let pass1_bytes = rough.state_bytes();
    drop(rough);

    let shared = Arc::new(LeShared::new(
        eps_prime,
        config.n,
        config.m,
        config.max_increment,
        split(master_seed, tags::L0_SHARED, 0),
    )?);

    if below_rough_cutoff(rough_est, eps_prime) {
        let shared_bytes = shared.state_bytes();
        let mut base = LogEstimator::new(shared);
        for upd in stream()? {
            let (i, v) = upd?;
            base.update(i, v)?;
        }
        let e = base.estimate();
        return Ok(TwoPassReport {
            value: e.value,
            saturated: e.saturated,
            rough_estimate: rough_est,
            selected_level: None,
            pass2_levels_per_copy: 0,
            pass2_total_les: 1,
            state_bytes: pass1_bytes.max(shared_bytes + base.state_bytes()),
        });
    }

    let j_used = select_level(rough_est, eps_prime).min(jmax);
    let scale = level_scale(j_used, jmax);
    let routes = (0..ROUGH_COPIES)
        .map(|c| PairwiseHash::new(config.n, n_eff, split(master_seed, tags::L0_LEVEL_HASH, c as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mut les: Vec<LogEstimator> = (0..ROUGH_COPIES)
        .map(|_| LogEstimator::new(shared.clone()))
        .collect();
    for upd in stream()? {
        let (i, v) = upd?;
        if i >= config.n {
            return Err(Error::OutOfDomain {
                x: i,
                domain: config.n,
            });
        }
        for (route, le) in routes.iter().zip(les.iter_mut()) {
            if lsb(route.eval_unchecked(i)).min(jmax) == j_used {
                le.apply(i, v);
            }
        }
    }
    let ests: Vec<LeEstimate> = les.iter().map(LogEstimator::estimate).collect();
    let combined = combine_level_estimates(&ests, scale);
    let pass2_bytes = shared.state_bytes()
        + les.iter().map(LogEstimator::state_bytes).sum::<usize>()
        + routes.len() * 2 * 8;
    Ok(TwoPassReport {
        value: combined.value,
        saturated: combined.saturated,
        rough_estimate: rough_est,
        selected_level: Some(j_used),
        pass2_levels_per_copy: 1,
        pass2_total_les: ROUGH_COPIES,
        state_bytes: pass1_bytes.max(pass2_bytes),
    })
}
