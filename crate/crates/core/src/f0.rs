//! Distinct-count (`F₀`) estimation for insertion-only streams.
//!
//! The sketch hashes every inserted item to one of `K` shared bins and stores,
//! per bin, the *maximum* subsampling level of any item that landed there,
//! where an item's level is the position of the lowest set bit of an
//! independent pairwise hash. A histogram `Y_r` of bin levels and the count of
//! occupied bins are maintained incrementally, and a constant-factor rough
//! estimate `R` (the same pyramid used by the turnstile support-size sketch,
//! fed with set semantics) selects between three read-out regimes:
//!
//! * `R ≤ 100` — the occupied-bin count itself (exact while items land in
//!   distinct bins);
//! * `R ≤ K/40` — occupancy inversion `ln(1 − occupied/K)/ln(1 − 1/K)`;
//! * otherwise — pick the subsampling depth `r` at which roughly `K/40` items
//!   survive, invert the good/bad-ball occupancy map on `Y_r`, and scale the
//!   surviving-ball count back up by `2^{r+1}`.
//!
//! Updates are `O(1)`: one bin raise plus the constant-size rough feed. All
//! state depends only on the *set* of distinct items seen, so the sketch is
//! invariant under permutation and duplication of the input, and same-seed
//! shards merge by bin-wise maximum (commutative, associative, idempotent).

use crate::error::{Error, Result};
use crate::hashing::{lsb, KWiseHash, PairwiseHash, MERSENNE_61};
use crate::l0::RoughEstimator;
use crate::numerics::{f_occupancy, invert_f, occupancy_inversion};
use crate::seeds::{split, tags};
use crate::serial::Reader;

/// Internal tightening of the accuracy target: bin counts and hash ranges are
/// sized for `ε/EPS_SLACK` rather than `ε` itself, absorbing the constant
/// factors of the occupancy-concentration argument so that the *stated* `ε`
/// is met with comfortable margin.
pub const EPS_SLACK: f64 = 100.0;

/// Rough estimates at or below this take the exact occupied-bin read-out.
pub const SMALL_ROUGH_MAX: u64 = 100;

/// Case boundary divisor: occupancy inversion is used while `R ≤ K/40`, and
/// the subsampled read-out picks the smallest depth `r` with `R/2^r ≤ K/40`.
pub const OCCUPANCY_DIVISOR: u64 = 40;

/// Worst-case ratio between the rough estimate and the distinct count times
/// the case-boundary divisor (`40 · 220`); sizing the bin value range for
/// `⌈log₂(HEADROOM·N/K)⌉` levels guarantees the selected subsampling depth is
/// always representable.
const LEVEL_HEADROOM: u64 = 8800;

/// The bisection tolerance of the occupancy-map inversion is
/// `ε_int·K / INVERT_TOL_DIVISOR`, half the additive error budget the
/// concentration argument allots to the inversion step.
const INVERT_TOL_DIVISOR: f64 = 320.0;

/// Deepest supported subsampling level (`lsb` of a 64-bit hash is ≤ 64, so
/// deeper levels are unreachable).
const MAX_LEVEL: u64 = 66;

/// Hard cap on the bin count, bounding resident memory for tiny `ε`.
const MAX_BINS: u64 = 1 << 28;

/// Serialization magic "F0SK" and format version.
const SERIAL_MAGIC: u32 = 0x4630_534B;
const SERIAL_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Packed bin array
// ---------------------------------------------------------------------------

/// Fixed-width bit-packed array holding one small value per bin.
///
/// Values are levels shifted by one (`0` encodes an empty bin, `r + 1`
/// encodes level `r`), so `⌈log₂(L + 3)⌉` bits per bin suffice for levels
/// `0..=L+1` plus the empty marker.
#[derive(Debug, Clone, PartialEq, Eq)]
struct PackedBins {
    bits: u32,
    len: usize,
    max_value: u64,
    words: Vec<u64>,
}

/// Reads entry `j` of a packed array with `bits`-wide entries.
#[inline]
fn packed_value_at(words: &[u64], bits: u32, j: usize) -> u64 {
    let bit = j * bits as usize;
    let w = bit >> 6;
    let off = (bit & 63) as u32;
    let mask = (1u64 << bits) - 1;
    let mut v = words[w] >> off;
    let avail = 64 - off;
    if avail < bits {
        v |= words[w + 1] << avail;
    }
    v & mask
}

impl PackedBins {
    /// Allocates `len` zeroed entries wide enough to store `0..=max_value`.
    fn new(len: usize, max_value: u64) -> Self {
        let bits = (u64::BITS - max_value.leading_zeros()).max(1);
        let words = vec![0u64; (len * bits as usize).div_ceil(64)];
        Self {
            bits,
            len,
            max_value,
            words,
        }
    }

    #[inline]
    fn get(&self, j: usize) -> u64 {
        debug_assert!(j < self.len);
        packed_value_at(&self.words, self.bits, j)
    }

    #[inline]
    fn set(&mut self, j: usize, v: u64) {
        debug_assert!(j < self.len && v <= self.max_value);
        let bit = j * self.bits as usize;
        let w = bit >> 6;
        let off = (bit & 63) as u32;
        let mask = (1u64 << self.bits) - 1;
        self.words[w] = (self.words[w] & !(mask << off)) | (v << off);
        let avail = 64 - off;
        if avail < self.bits {
            self.words[w + 1] = (self.words[w + 1] & !(mask >> avail)) | (v >> avail);
        }
    }

    /// Raw backing words (for serialization).
    fn words(&self) -> &[u64] {
        &self.words
    }

    /// Replaces the backing words after validating length, zero padding in
    /// the final partial word, and the per-entry value bound.
    fn replace_words(&mut self, words: Vec<u64>) -> Result<()> {
        if words.len() != self.words.len() {
            return Err(Error::Deserialize(format!(
                "packed bin array has {} words, expected {}",
                words.len(),
                self.words.len()
            )));
        }
        let tail = (self.len * self.bits as usize) % 64;
        if tail != 0 && words.last().is_some_and(|&w| w >> tail != 0) {
            return Err(Error::Deserialize(
                "nonzero padding bits in packed bin array".into(),
            ));
        }
        for j in 0..self.len {
            if packed_value_at(&words, self.bits, j) > self.max_value {
                return Err(Error::Deserialize(format!(
                    "bin {j} holds a level beyond the configured maximum"
                )));
            }
        }
        self.words = words;
        Ok(())
    }

    /// Bytes of resident state.
    fn state_bytes(&self) -> usize {
        self.words.len() * 8 + 24
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Parameters of an [`F0Sketch`]: target relative accuracy `eps`, universe
/// size `n` (valid indices are `0..n`), and stream-length bound `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Config {
    /// Target relative accuracy of the distinct-count estimate.
    pub eps: f64,
    /// Universe size: updates must carry indices in `[0, n)`.
    pub n: u64,
    /// Upper bound on the number of stream updates.
    pub m: u64,
}

impl F0Config {
    /// Bundles the three parameters; validation happens in
    /// [`F0Config::validate`] (called by [`F0Sketch::new`]).
    pub fn new(eps: f64, n: u64, m: u64) -> Self {
        Self { eps, n, m }
    }

    /// Internally tightened accuracy target (`eps / EPS_SLACK`) that drives
    /// every derived size.
    pub fn eps_int(&self) -> f64 {
        self.eps / EPS_SLACK
    }

    /// Number of shared bins, `K = ⌈1/ε_int²⌉`.
    pub fn bins(&self) -> u64 {
        (1.0 / (self.eps_int() * self.eps_int())).ceil() as u64
    }

    /// Range of the universe-reducing hash (and domain of the bin hash),
    /// `⌈1/ε_int⁴⌉`; quadratically larger than the bin count so that reduced
    /// indices collide with negligible probability.
    pub fn reduced_range(&self) -> u64 {
        let e2 = self.eps_int() * self.eps_int();
        (1.0 / (e2 * e2)).ceil() as u64
    }

    /// Effective distinct-count bound `N = min{n, m}`: the stream can touch
    /// at most this many indices.
    pub fn effective_n(&self) -> u64 {
        self.n.min(self.m)
    }

    /// Deepest item level `L` stored in a bin (bins hold `{empty} ∪ [0, L+1]`).
    /// Sized so that the depth selected by the subsampled read-out — at most
    /// `⌈log₂(40R/K)⌉` with `R ≤ 220·N` — always fits.
    pub fn levels(&self) -> u64 {
        let ratio = LEVEL_HEADROOM as f64 * self.effective_n() as f64 / self.bins() as f64;
        let l = ratio.log2().ceil();
        if l < 1.0 {
            1
        } else {
            (l as u64).min(MAX_LEVEL)
        }
    }

    /// Additive bisection tolerance handed to the occupancy-map inversion.
    pub fn invert_tol(&self) -> f64 {
        self.eps_int() * self.bins() as f64 / INVERT_TOL_DIVISOR
    }

    /// Checks every constructor precondition.
    pub fn validate(&self) -> Result<()> {
        if !self.eps.is_finite() || self.eps <= 0.0 || self.eps > 0.5 {
            return Err(Error::InvalidParam(format!(
                "accuracy target must lie in (0, 0.5], got {}",
                self.eps
            )));
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidParam(
                "universe size and stream bound must be ≥ 1".into(),
            ));
        }
        if self.n > MERSENNE_61 {
            return Err(Error::InvalidParam(format!(
                "universe size {} exceeds the hash domain 2^61 − 1",
                self.n
            )));
        }
        if self.bins() > MAX_BINS {
            return Err(Error::InvalidParam(format!(
                "accuracy target {} needs more than {} bins",
                self.eps, MAX_BINS
            )));
        }
        if self.reduced_range() > MERSENNE_61 {
            return Err(Error::InvalidParam(format!(
                "accuracy target {} needs a reduced range beyond 2^61 − 1",
                self.eps
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Estimate type
// ---------------------------------------------------------------------------

/// Which of the three read-out regimes produced an estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum F0Branch {
    /// Rough estimate ≤ 100: the occupied-bin count is reported directly.
    SmallRough,
    /// Rough estimate ≤ K/40: occupancy inversion over all bins.
    Occupancy,
    /// Larger streams: occupancy-map inversion at the selected subsampling
    /// depth, scaled back up.
    Subsampled,
}

/// A distinct-count estimate and how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F0Estimate {
    /// Estimated number of distinct items.
    pub value: f64,
    /// The read-out regime that produced the value.
    pub branch: F0Branch,
    /// Set when the subsampled read-out had to clamp: either the selected
    /// depth exceeded the representable level range, or the level histogram
    /// count exceeded the invertible occupancy range. The value is still the
    /// best clamped answer, but its error guarantee no longer applies.
    pub breakdown: bool,
}

/// Smallest positive depth `r` with `R/2^r ≤ K/40`, capped at `max_level`;
/// the second component reports whether the cap was hit.
fn select_subsample_depth(rough: u64, k: u64, max_level: u64) -> (u64, bool) {
    let scaled = rough as u128 * OCCUPANCY_DIVISOR as u128;
    let k = k as u128;
    let mut r: u64 = 1;
    while scaled > (k << r) && r < max_level {
        r += 1;
    }
    (r, scaled > (k << r))
}

/// Inverts the good/bad-ball occupancy map on a level-histogram count `y`
/// and scales by `2^{r+1}`; the second component flags `y` beyond the
/// invertible range `[0, f(K/3)]` (the count is clamped before inversion).
fn subsampled_value(y: u64, r: u64, k: u64, tol: f64) -> (f64, bool) {
    let cap = f_occupancy(k as f64 / 3.0, k);
    let breakdown = (y as f64) > cap;
    let clamped = (y as f64).min(cap);
    let a = invert_f(clamped, k, tol).expect("clamped occupancy lies in the invertible range");
    (a * ((r + 1) as f64).exp2(), breakdown)
}

// ---------------------------------------------------------------------------
// The sketch
// ---------------------------------------------------------------------------

/// Distinct-count sketch for insertion-only streams.
///
/// See the module documentation for the algorithm; constructor parameters are
/// documented on [`F0Config`]. All randomness derives from `master_seed`, so
/// two sketches with equal configuration and seed are interchangeable and
/// mergeable.
#[derive(Debug, Clone)]
pub struct F0Sketch {
    config: F0Config,
    master_seed: u64,
    k: u64,
    levels: u64,
    /// Bin hash over the reduced universe.
    h1: KWiseHash,
    /// Universe-reducing hash `[n] → [⌈1/ε_int⁴⌉]`.
    h2: PairwiseHash,
    /// Level hash `[n] → [N]`; an item's level is `lsb(h3(i))`.
    h3: PairwiseHash,
    bins: PackedBins,
    /// `hist[r] = |{bins at level r}|` for `r ∈ 0..=L+1`.
    hist: Vec<u64>,
    nonnull: u64,
    rough: RoughEstimator,
}

impl F0Sketch {
    /// Builds an empty sketch; all randomness is derived from `master_seed`.
    pub fn new(config: F0Config, master_seed: u64) -> Result<Self> {
        config.validate()?;
        let k = config.bins();
        let levels = config.levels();
        let reduced = config.reduced_range();
        let degree = ((1.0 / config.eps_int()).log2().ceil() as u32).max(2);
        let h1 = KWiseHash::new(degree, reduced, k, split(master_seed, tags::F0_H1, 0))?;
        let h2 = PairwiseHash::new(config.n, reduced, split(master_seed, tags::F0_H2, 0))?;
        let h3 = PairwiseHash::new(config.n, config.effective_n(), split(master_seed, tags::F0_H3, 0))?;
        let rough = RoughEstimator::new(
            config.n,
            config.effective_n(),
            split(master_seed, tags::F0_ROUGH, 0),
        )?;
        let hist = vec![0u64; (levels + 2) as usize];
        Ok(Self {
            config,
            master_seed,
            k,
            levels,
            h1,
            h2,
            h3,
            bins: PackedBins::new(k as usize, levels + 2),
            hist,
            nonnull: 0,
            rough,
        })
    }

    /// The configuration this sketch was built with.
    pub fn config(&self) -> &F0Config {
        &self.config
    }

    /// The seed every internal hash was derived from.
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Number of shared bins `K`.
    pub fn bin_count(&self) -> u64 {
        self.k
    }

    /// Deepest item level stored in a bin.
    pub fn level_count(&self) -> u64 {
        self.levels
    }

    /// Number of occupied (non-empty) bins.
    pub fn occupied_bins(&self) -> u64 {
        self.nonnull
    }

    /// Histogram of bin levels: entry `r` counts bins whose deepest item sits
    /// at level `r`, for `r ∈ 0..=L+1`.
    pub fn level_histogram(&self) -> &[u64] {
        &self.hist
    }

    /// Records one insertion of item `i`. Duplicate insertions leave the
    /// state bytewise unchanged; cost is O(1) in the stream length.
    pub fn update(&mut self, i: u64) -> Result<()> {
        if i >= self.config.n {
            return Err(Error::OutOfDomain {
                x: i,
                domain: self.config.n,
            });
        }
        self.rough.mark(i);
        let level = (lsb(self.h3.eval_unchecked(i)) as u64).min(self.levels + 1);
        let bin = self.h1.eval_unchecked(self.h2.eval_unchecked(i)) as usize;
        let encoded = level + 1;
        let old = self.bins.get(bin);
        if encoded > old {
            self.bins.set(bin, encoded);
            if old == 0 {
                self.nonnull += 1;
            } else {
                self.hist[(old - 1) as usize] -= 1;
            }
            self.hist[level as usize] += 1;
        }
        Ok(())
    }

    /// The rough constant-factor overestimate currently held by the embedded
    /// pyramid (exposed for diagnostics).
    pub fn rough_estimate(&self) -> u64 {
        self.rough.estimate()
    }

    /// Estimates the number of distinct items inserted so far. O(L) time.
    pub fn estimate(&self) -> F0Estimate {
        let rough = self.rough.estimate();
        if rough <= SMALL_ROUGH_MAX {
            return F0Estimate {
                value: self.nonnull as f64,
                branch: F0Branch::SmallRough,
                breakdown: false,
            };
        }
        if rough as u128 * OCCUPANCY_DIVISOR as u128 <= self.k as u128 {
            return F0Estimate {
                value: occupancy_inversion(self.nonnull, self.k),
                branch: F0Branch::Occupancy,
                breakdown: false,
            };
        }
        let (r, clamped) = select_subsample_depth(rough, self.k, self.levels + 1);
        let (value, overflowed) =
            subsampled_value(self.hist[r as usize], r, self.k, self.config.invert_tol());
        F0Estimate {
            value,
            branch: F0Branch::Subsampled,
            breakdown: clamped || overflowed,
        }
    }

    /// Merges two sketches fed by shards of one logical stream. Bin-wise
    /// maximum plus rough-pyramid union, so merging is commutative,
    /// associative, and idempotent; merging the sketches of two shards equals
    /// the sketch of the concatenated stream, bytewise.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.config != other.config || self.master_seed != other.master_seed {
            return Err(Error::MergeMismatch(
                "distinct-count sketch configuration or seed differ".into(),
            ));
        }
        let mut out = self.clone();
        out.rough = self.rough.or_merge(&other.rough)?;
        for j in 0..self.k as usize {
            let theirs = other.bins.get(j);
            if theirs > out.bins.get(j) {
                out.bins.set(j, theirs);
            }
        }
        out.recount();
        Ok(out)
    }

    /// Rebuilds the level histogram and occupied-bin count from the bins.
    fn recount(&mut self) {
        self.hist.iter_mut().for_each(|y| *y = 0);
        self.nonnull = 0;
        for j in 0..self.k as usize {
            let v = self.bins.get(j);
            if v != 0 {
                self.nonnull += 1;
                self.hist[(v - 1) as usize] += 1;
            }
        }
    }

    /// Serializes the sketch (magic, version, configuration, seed, packed
    /// bins, then the rough pyramid's buckets, all little-endian).
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&SERIAL_MAGIC.to_le_bytes());
        out.extend_from_slice(&SERIAL_VERSION.to_le_bytes());
        out.extend_from_slice(&self.config.eps.to_le_bytes());
        out.extend_from_slice(&self.config.n.to_le_bytes());
        out.extend_from_slice(&self.config.m.to_le_bytes());
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        crate::serial::push_u64_slice(&mut out, self.bins.words());
        self.rough.write_state(&mut out);
        out
    }

    /// Reconstructs a sketch from [`F0Sketch::serialize`] output.
    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.u32()? != SERIAL_MAGIC {
            return Err(Error::Deserialize("bad magic".into()));
        }
        if r.u32()? != SERIAL_VERSION {
            return Err(Error::Deserialize("unsupported version".into()));
        }
        let config = F0Config {
            eps: r.f64()?,
            n: r.u64()?,
            m: r.u64()?,
        };
        let master_seed = r.u64()?;
        let mut sketch = Self::new(config, master_seed)?;
        sketch.bins.replace_words(crate::serial::read_u64_vec(&mut r)?)?;
        sketch.rough.read_state(&mut r)?;
        r.finish()?;
        sketch.recount();
        Ok(sketch)
    }

    /// Total bytes of resident sketch state.
    pub fn state_bytes(&self) -> usize {
        self.bins.state_bytes()
            + self.hist.len() * 8
            + self.rough.state_bytes()
            + (self.h1.coefficients().len() + 2 + 2) * 8
            + 64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds::rng_from;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn cfg(eps: f64, n: u64, m: u64) -> F0Config {
        F0Config::new(eps, n, m)
    }

    /// Builds a sketch and feeds it items `0..count` from the given seed.
    fn fed_sketch(config: F0Config, seed: u64, count: u64) -> F0Sketch {
        let mut s = F0Sketch::new(config, seed).expect("valid config");
        for i in 0..count {
            s.update(i).expect("in-domain");
        }
        s
    }

    #[test]
    fn config_reports_derived_sizes() {
        let c = cfg(0.1, 1_000_000, 1_000_000);
        assert_eq!(c.bins(), 1_000_000);
        assert_eq!(c.reduced_range(), 1_000_000_000_000);
        // 8800·10⁶/10⁶ = 8800, ⌈log₂ 8800⌉ = 14.
        assert_eq!(c.levels(), 14);
        assert!((c.invert_tol() - 3.125).abs() < 1e-9);

        // Small effective N keeps at least one level.
        assert_eq!(cfg(0.1, 2, 2).levels(), 1);
        // N = min(n, m) uses the stream bound when it is smaller.
        assert_eq!(cfg(0.1, 1 << 40, 10_000).levels(), 7);
    }

    #[test]
    fn config_rejects_bad_parameters() {
        assert!(cfg(0.0, 10, 10).validate().is_err());
        assert!(cfg(-0.1, 10, 10).validate().is_err());
        assert!(cfg(0.6, 10, 10).validate().is_err());
        assert!(cfg(f64::NAN, 10, 10).validate().is_err());
        assert!(cfg(0.1, 0, 10).validate().is_err());
        assert!(cfg(0.1, 10, 0).validate().is_err());
        assert!(cfg(0.1, u64::MAX, 10).validate().is_err());
        // Tiny ε overflows the bin budget.
        assert!(cfg(1e-4, 10, 10).validate().is_err());
        assert!(cfg(0.1, 1 << 20, 1 << 20).validate().is_ok());
    }

    #[test]
    fn packed_bins_matches_reference_model() {
        let mut rng = rng_from(0xB1B5);
        for &(len, max_value) in &[(37usize, 2u64), (1000, 16), (513, 9)] {
            let mut packed = PackedBins::new(len, max_value);
            let mut model = vec![0u64; len];
            for _ in 0..10_000 {
                let j = rng.gen_range(0..len);
                let v = rng.gen_range(0..=max_value);
                packed.set(j, v);
                model[j] = v;
            }
            for (j, &v) in model.iter().enumerate() {
                assert_eq!(packed.get(j), v, "bin {j} of len {len}");
            }
            // Padding bits in the last word stay zero.
            let tail = (len * packed.bits as usize) % 64;
            if tail != 0 {
                assert_eq!(packed.words().last().unwrap() >> tail, 0);
            }
            // Round trip through the raw words.
            let mut fresh = PackedBins::new(len, max_value);
            fresh.replace_words(packed.words().to_vec()).unwrap();
            assert_eq!(fresh, packed);
        }
    }

    #[test]
    fn packed_bins_rejects_malformed_words() {
        let mut packed = PackedBins::new(100, 5);
        assert!(packed.replace_words(vec![0u64; 3]).is_err());

        // Dirty padding bits in the final word.
        let tail = (100 * packed.bits as usize) % 64;
        assert_ne!(tail, 0, "test config must leave padding bits");
        let n_words = packed.words().len();
        let mut dirty = vec![0u64; n_words];
        dirty[n_words - 1] = 1u64 << 63;
        assert!(packed.replace_words(dirty).is_err());

        // An in-range word pattern that decodes to an oversized entry.
        let mut oversized = PackedBins::new(100, 7);
        oversized.set(3, 7);
        assert!(packed.replace_words(oversized.words().to_vec()).is_err());
    }

    #[test]
    fn single_update_occupies_one_bin_idempotently() {
        let mut s = F0Sketch::new(cfg(0.2, 1 << 16, 1 << 16), 7).unwrap();
        s.update(12345).unwrap();
        assert_eq!(s.occupied_bins(), 1);
        assert_eq!(s.level_histogram().iter().sum::<u64>(), 1);

        // A duplicate insertion is a bytewise no-op.
        let before = s.serialize();
        s.update(12345).unwrap();
        assert_eq!(s.serialize(), before);
    }

    #[test]
    fn histogram_matches_bin_recount() {
        let config = cfg(0.25, 100_000, 100_000);
        let mut s = F0Sketch::new(config, 99).unwrap();
        let mut rng = rng_from(0x4631);
        for _ in 0..10_000 {
            s.update(rng.gen_range(0..100_000)).unwrap();
        }
        let mut recounted = s.clone();
        recounted.recount();
        assert_eq!(recounted.hist, s.hist);
        assert_eq!(recounted.nonnull, s.nonnull);
        // Occupied plus empty bins account for every bin.
        let occupied: u64 = s.hist.iter().sum();
        assert_eq!(occupied, s.nonnull);
        assert!(occupied <= s.bin_count());
    }

    #[test]
    fn empty_stream_reports_zero() {
        let s = F0Sketch::new(cfg(0.1, 1 << 20, 1 << 20), 3).unwrap();
        let e = s.estimate();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.branch, F0Branch::SmallRough);
        assert!(!e.breakdown);
    }

    #[test]
    fn few_items_take_small_rough_branch_exactly() {
        // Five distinct items can never push a rough level past its
        // report threshold, so the rough estimate stays at its floor and the
        // read-out is the exact occupied-bin count.
        for seed in 0..20 {
            let s = fed_sketch(cfg(0.1, 1 << 16, 1 << 16), seed, 5);
            let e = s.estimate();
            assert_eq!(e.branch, F0Branch::SmallRough, "seed {seed}");
            assert_eq!(e.value, 5.0, "seed {seed}");
            assert!(!e.breakdown);
        }
    }

    #[test]
    fn mid_size_streams_take_occupancy_branch() {
        // 500 items: the rough estimate lands well inside (100, K/40], and
        // occupancy inversion recovers the count to within a fraction of a
        // bin (K = 10⁶, so collisions are rare).
        let s = fed_sketch(cfg(0.1, 1 << 16, 1 << 16), 0xACC, 500);
        let e = s.estimate();
        assert_eq!(e.branch, F0Branch::Occupancy);
        assert!((e.value - 500.0).abs() < 1.5, "got {}", e.value);
        assert!(!e.breakdown);
    }

    #[test]
    fn sixty_items_accurate_across_seeds() {
        // The rough overestimate pushes F₀ = 60 into the occupancy branch on
        // nearly every seed and inversion lands within a tenth of a percent;
        // whenever a rough failure selects the small branch instead, the
        // occupied-bin count must be exactly right.
        let config = cfg(0.1, 1 << 12, 64);
        let mut tight = 0;
        for seed in 0..100 {
            let s = fed_sketch(config, 1000 + seed, 60);
            let e = s.estimate();
            if e.branch == F0Branch::SmallRough {
                assert_eq!(e.value, 60.0, "seed {seed} small-branch must be exact");
            }
            if (e.value - 60.0).abs() / 60.0 <= 0.01 {
                tight += 1;
            }
        }
        assert!(tight >= 95, "only {tight}/100 seeds within 1%");
    }

    #[test]
    fn ten_thousand_items_subsampled_accuracy() {
        let config = cfg(0.1, 1 << 16, 10_000);
        let mut within = 0;
        let mut subsampled = 0;
        for seed in 0..30 {
            let s = fed_sketch(config, 7000 + seed, 10_000);
            let e = s.estimate();
            if e.branch == F0Branch::Subsampled {
                subsampled += 1;
            }
            if (e.value - 10_000.0).abs() / 10_000.0 <= 0.1 {
                within += 1;
            }
        }
        assert!(within >= 24, "only {within}/30 seeds within 10%");
        assert!(subsampled >= 24, "subsampled branch taken {subsampled}/30");
    }

    #[test]
    fn level_histogram_tracks_binomial_rates() {
        // 1000 distinct items over an effective N = 1024: with K = 10⁶ bins
        // nearly every item occupies its own bin, so hist[r] is the number
        // of items whose level hash has lsb r and should match the binomial
        // mean S·2^{−(r+1)} across seeds to 3σ of the seed-averaged count
        // (plus a one-bin allowance for the occasional collision).
        let config = cfg(0.1, 1 << 10, 1 << 10);
        const SEEDS: u64 = 100;
        const ITEMS: f64 = 1000.0;
        let mut sums = [0f64; 4];
        for seed in 0..SEEDS {
            let s = fed_sketch(config, 31 + seed, 1000);
            for (r, sum) in sums.iter_mut().enumerate() {
                *sum += s.level_histogram()[r] as f64;
            }
        }
        for (r, sum) in sums.iter().enumerate() {
            let p = 0.5f64.powi(r as i32 + 1);
            let mean = sum / SEEDS as f64;
            let expect = ITEMS * p;
            let sd = (ITEMS * p * (1.0 - p)).sqrt();
            let tol = 3.0 * sd / (SEEDS as f64).sqrt() + 1.0;
            assert!(
                (mean - expect).abs() <= tol,
                "level {r}: mean {mean:.2} vs {expect:.2} ± {tol:.2}"
            );
        }
    }

    #[test]
    fn update_rejects_out_of_domain() {
        let mut s = F0Sketch::new(cfg(0.2, 100, 100), 5).unwrap();
        let before = s.serialize();
        assert!(matches!(
            s.update(100),
            Err(Error::OutOfDomain { x: 100, domain: 100 })
        ));
        assert_eq!(s.serialize(), before, "failed update must not mutate");
    }

    #[test]
    fn merge_combines_shards_bytewise() {
        let config = cfg(0.2, 1 << 14, 1 << 14);
        let seed = 0xF00D;
        let whole = fed_sketch(config, seed, 1000);

        let mut left = F0Sketch::new(config, seed).unwrap();
        let mut right = F0Sketch::new(config, seed).unwrap();
        for i in 0..1000 {
            if i % 2 == 0 {
                left.update(i).unwrap();
            } else {
                right.update(i).unwrap();
            }
        }
        let merged = left.merge(&right).unwrap();
        assert_eq!(merged.serialize(), whole.serialize());

        // Merging with an empty sketch or with itself changes nothing.
        let empty = F0Sketch::new(config, seed).unwrap();
        assert_eq!(whole.merge(&empty).unwrap().serialize(), whole.serialize());
        assert_eq!(whole.merge(&whole).unwrap().serialize(), whole.serialize());

        // Configuration or seed mismatches are rejected.
        let other_seed = F0Sketch::new(config, seed + 1).unwrap();
        assert!(whole.merge(&other_seed).is_err());
        let other_cfg = F0Sketch::new(cfg(0.25, 1 << 14, 1 << 14), seed).unwrap();
        assert!(whole.merge(&other_cfg).is_err());
    }

    #[test]
    fn stream_is_order_and_duplication_invariant() {
        let config = cfg(0.2, 1 << 14, 1 << 13);
        let seed = 0xD15C;
        let items: Vec<u64> = (0..500).map(|i| i * 17 % (1 << 14)).collect();

        let mut forward = F0Sketch::new(config, seed).unwrap();
        for &i in &items {
            forward.update(i).unwrap();
        }

        let mut reversed = F0Sketch::new(config, seed).unwrap();
        for &i in items.iter().rev() {
            reversed.update(i).unwrap();
        }

        let mut noisy = F0Sketch::new(config, seed).unwrap();
        let mut tripled: Vec<u64> = items.iter().flat_map(|&i| [i, i, i]).collect();
        tripled.shuffle(&mut rng_from(1));
        for &i in &tripled {
            noisy.update(i).unwrap();
        }

        let reference = forward.serialize();
        assert_eq!(reversed.serialize(), reference);
        assert_eq!(noisy.serialize(), reference);
    }

    #[test]
    fn serialization_round_trips_and_rejects_corruption() {
        let s = fed_sketch(cfg(0.3, 512, 512), 0xBEEF, 300);
        let bytes = s.serialize();
        let back = F0Sketch::deserialize(&bytes).unwrap();
        assert_eq!(back.serialize(), bytes);
        assert_eq!(back.estimate(), s.estimate());
        assert_eq!(back.occupied_bins(), s.occupied_bins());

        let mut bad_magic = bytes.clone();
        bad_magic[0] ^= 0xFF;
        assert!(F0Sketch::deserialize(&bad_magic).is_err());

        assert!(F0Sketch::deserialize(&bytes[..bytes.len() - 1]).is_err());

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert!(F0Sketch::deserialize(&trailing).is_err());

        // Dirty padding bits inside the packed bin payload.
        let words = s.bins.words().len();
        let tail = (s.k as usize * s.bins.bits as usize) % 64;
        assert_ne!(tail, 0, "test config must leave padding bits");
        let header = 8 + 4 * 8;
        let last_word_at = header + 8 + (words - 1) * 8;
        let mut dirty = bytes.clone();
        dirty[last_word_at + 7] |= 0x80;
        assert!(F0Sketch::deserialize(&dirty).is_err());
    }

    #[test]
    fn subsample_depth_selection_matches_boundaries() {
        let k = 1_000_000u64;
        // At the occupancy boundary the first depth already suffices.
        assert_eq!(select_subsample_depth(25_000, k, 20), (1, false));
        assert_eq!(select_subsample_depth(25_001, k, 20), (1, false));
        assert_eq!(select_subsample_depth(50_000, k, 20), (1, false));
        assert_eq!(select_subsample_depth(50_001, k, 20), (2, false));
        // 40R/K = 40 needs 2^r ≥ 40, i.e. depth 6.
        assert_eq!(select_subsample_depth(1_000_000, k, 20), (6, false));
        // The cap clamps and reports it.
        assert_eq!(select_subsample_depth(1_000_000, k, 3), (3, true));
    }

    #[test]
    fn subsampled_inversion_flags_breakdown() {
        let k = 1000u64;
        let tol = 1e-6;
        // Round trip: y = f(A) inverts back to A (then scaled by 2^{r+1}).
        let a = 120.0;
        let (value, breakdown) = subsampled_value(f_occupancy(a, k).round() as u64, 2, k, tol);
        assert!(!breakdown);
        let recovered = value / 8.0;
        assert!((recovered - a).abs() < 1.0, "recovered {recovered}");

        // Counts beyond f(K/3) clamp and flag.
        let cap = f_occupancy(k as f64 / 3.0, k);
        let (value, breakdown) = subsampled_value(cap as u64 + 50, 2, k, tol);
        assert!(breakdown);
        let expect = invert_f(cap, k, tol).unwrap() * 8.0;
        assert!((value - expect).abs() < 1e-6);
    }

    #[test]
    fn state_bytes_reports_resident_footprint() {
        let small = F0Sketch::new(cfg(0.2, 1 << 10, 1 << 10), 1).unwrap();
        let large = F0Sketch::new(cfg(0.05, 1 << 10, 1 << 10), 1).unwrap();
        // 16× tighter ε² budget means a correspondingly larger bin array.
        assert!(large.state_bytes() > small.state_bytes());
        assert!(small.state_bytes() >= small.bins.state_bytes());
    }
}
