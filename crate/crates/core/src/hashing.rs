//! Seeded hash families with bounded independence.
//!
//! The workhorse is degree-(k−1) polynomial hashing over the Mersenne prime
//! field `F_q` with `q = 2^61 − 1`: a random polynomial with k coefficients
//! evaluated by Horner's rule gives a k-wise independent map — any k distinct
//! inputs receive jointly uniform field values over the choice of
//! coefficients. Field values are brought down to a target range
//! `[0, range_size)` with the multiply-shift reduction `(y · R) >> 61`, whose
//! distributional bias is at most `range_size / 2^61` per point (below `2^-32`
//! for every range used in this crate).
//!
//! Also provided: uniform prime sampling with a deterministic Miller–Rabin
//! certificate (exact for all 64-bit inputs), the `lsb` level map used by
//! subsampling sketches, and a universe reducer that first folds huge
//! universes modulo a random prime before pairwise hashing into a working
//! range.

use crate::error::{Error, Result};
use crate::seeds;
use rand::Rng;

/// The Mersenne prime `2^61 − 1` used as the default hash field modulus.
pub const MERSENNE_61: u64 = (1u64 << 61) - 1;

/// Multiplies two field elements modulo `2^61 − 1` using a widening multiply
/// and the Mersenne fold `lo + hi` (valid because `2^61 ≡ 1 (mod q)`).
#[inline(always)]
pub fn mul_mod_m61(a: u64, b: u64) -> u64 {
    let prod = (a as u128) * (b as u128);
    let lo = (prod as u64) & MERSENNE_61;
    let hi = (prod >> 61) as u64;
    let mut s = lo + hi;
    if s >= MERSENNE_61 {
        s -= MERSENNE_61;
    }
    s
}

/// Adds two field elements modulo `2^61 − 1`.
#[inline(always)]
pub fn add_mod_m61(a: u64, b: u64) -> u64 {
    let mut s = a + b; // both < 2^61, no overflow in u64
    if s >= MERSENNE_61 {
        s -= MERSENNE_61;
    }
    s
}

/// Index of the lowest set bit of `x`, with the convention `lsb(0) = 64`
/// (an all-zero value is treated as deeper than every subsampling level).
#[inline(always)]
pub fn lsb(x: u64) -> u32 {
    x.trailing_zeros()
}

/// A k-wise independent polynomial hash over a prime field, reduced to
/// `[0, range_size)`.
///
/// For a fixed seed the map is deterministic; over random seeds any k
/// distinct points receive independent uniform field values (exhaustively
/// testable for tiny moduli).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KWiseHash {
    /// Polynomial coefficients, constant term first; `coeffs.len() == k`.
    coeffs: Vec<u64>,
    /// Prime modulus; must exceed every domain element.
    modulus: u64,
    domain_size: u64,
    range_size: u64,
}

impl KWiseHash {
    /// Creates a k-wise hash over `2^61 − 1` with coefficients derived
    /// deterministically from `seed`.
    ///
    /// Errors if `k < 2`, either size is zero, or the domain does not fit
    /// below the modulus.
    pub fn new(k: u32, domain_size: u64, range_size: u64, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParam(format!(
                "independence degree k must be ≥ 2, got {k}"
            )));
        }
        if domain_size == 0 || range_size == 0 {
            return Err(Error::InvalidParam(
                "domain_size and range_size must be ≥ 1".into(),
            ));
        }
        if domain_size > MERSENNE_61 {
            return Err(Error::InvalidParam(format!(
                "domain_size {domain_size} exceeds field modulus {MERSENNE_61}"
            )));
        }
        let mut rng = seeds::rng_from(seed);
        let coeffs = (0..k).map(|_| rng.gen_range(0..MERSENNE_61)).collect();
        Ok(Self {
            coeffs,
            modulus: MERSENNE_61,
            domain_size,
            range_size,
        })
    }

    /// Creates a hash from explicit coefficients over an explicit prime
    /// modulus. Intended for exhaustive small-field tests; `modulus` must be
    /// prime and every coefficient must lie in the field.
    pub fn from_coefficients(coeffs: Vec<u64>, modulus: u64, range_size: u64) -> Result<Self> {
        if coeffs.len() < 2 {
            return Err(Error::InvalidParam(
                "need at least 2 coefficients (k ≥ 2)".into(),
            ));
        }
        if !is_prime_u64(modulus) {
            return Err(Error::InvalidParam(format!("{modulus} is not prime")));
        }
        if coeffs.iter().any(|&c| c >= modulus) {
            return Err(Error::InvalidParam(
                "coefficient outside the field".into(),
            ));
        }
        if range_size == 0 {
            return Err(Error::InvalidParam("range_size must be ≥ 1".into()));
        }
        Ok(Self {
            coeffs,
            modulus,
            domain_size: modulus,
            range_size,
        })
    }

    /// Independence degree k.
    pub fn k(&self) -> u32 {
        self.coeffs.len() as u32
    }

    /// Polynomial coefficients, constant term first.
    pub fn coefficients(&self) -> &[u64] {
        &self.coeffs
    }

    /// Range size of the reduced output.
    pub fn range_size(&self) -> u64 {
        self.range_size
    }

    /// Evaluates the hash on `x`, reduced to `[0, range_size)`.
    pub fn eval(&self, x: u64) -> Result<u64> {
        if x >= self.domain_size {
            return Err(Error::OutOfDomain {
                x,
                domain: self.domain_size,
            });
        }
        Ok(self.eval_unchecked(x))
    }

    /// Evaluates the hash without the domain check (callers validate once per
    /// update, not once per row).
    #[inline(always)]
    pub fn eval_unchecked(&self, x: u64) -> u64 {
        reduce_to_range(self.eval_field(x), self.modulus, self.range_size)
    }

    /// Evaluates the polynomial and returns the raw field value in
    /// `[0, modulus)` without range reduction.
    #[inline(always)]
    pub fn eval_field(&self, x: u64) -> u64 {
        if self.modulus == MERSENNE_61 {
            // Horner's rule, highest-degree coefficient first.
            let mut acc = 0u64;
            for &c in self.coeffs.iter().rev() {
                acc = add_mod_m61(mul_mod_m61(acc, x), c);
            }
            acc
        } else {
            let m = self.modulus as u128;
            let mut acc = 0u128;
            for &c in self.coeffs.iter().rev() {
                acc = (acc * (x as u128) + c as u128) % m;
            }
            acc as u64
        }
    }
}

/// Reduces a field value uniform on `[0, modulus)` to `[0, range_size)` by
/// multiply-shift; bias per output is at most `range_size / modulus`.
#[inline(always)]
fn reduce_to_range(y: u64, modulus: u64, range_size: u64) -> u64 {
    if modulus == MERSENNE_61 {
        ((y as u128 * range_size as u128) >> 61) as u64
    } else {
        ((y as u128 * range_size as u128) / modulus as u128) as u64
    }
}

/// A pairwise independent hash: the k = 2 special case of [`KWiseHash`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairwiseHash {
    inner: KWiseHash,
}

impl PairwiseHash {
    /// Creates a pairwise hash `x ↦ ((a·x + b) mod q) → [0, range_size)` with
    /// `(a, b)` derived from `seed`.
    pub fn new(domain_size: u64, range_size: u64, seed: u64) -> Result<Self> {
        Ok(Self {
            inner: KWiseHash::new(2, domain_size, range_size, seed)?,
        })
    }

    /// See [`KWiseHash::from_coefficients`]; requires exactly 2 coefficients.
    pub fn from_coefficients(b: u64, a: u64, modulus: u64, range_size: u64) -> Result<Self> {
        Ok(Self {
            inner: KWiseHash::from_coefficients(vec![b, a], modulus, range_size)?,
        })
    }

    pub fn range_size(&self) -> u64 {
        self.inner.range_size()
    }

    /// Evaluates the hash on `x`, reduced to `[0, range_size)`.
    pub fn eval(&self, x: u64) -> Result<u64> {
        self.inner.eval(x)
    }

    /// Domain-unchecked evaluation for validated hot paths.
    #[inline(always)]
    pub fn eval_unchecked(&self, x: u64) -> u64 {
        self.inner.eval_unchecked(x)
    }

    /// Raw field value without range reduction.
    #[inline(always)]
    pub fn eval_field(&self, x: u64) -> u64 {
        self.inner.eval_field(x)
    }
}

/// Deterministic Miller–Rabin primality test, exact for all `u64` inputs
/// (witness set {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37}).
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let s = d.trailing_zeros();
    d >>= s;
    'witness: for &a in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod_u64(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

#[inline]
fn mul_mod_u64(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod_u64(acc, base, m);
        }
        base = mul_mod_u64(base, base, m);
        exp >>= 1;
    }
    acc
}

/// Samples a uniformly random prime from `[lo, hi]` by rejection, certifying
/// candidates with the deterministic Miller–Rabin test above.
///
/// Errors if `hi < lo`, `lo < 2`, or no prime is found within the retry
/// budget (which makes a prime-free interval detectable rather than a hang).
pub fn sample_prime<R: Rng>(lo: u64, hi: u64, rng: &mut R) -> Result<u64> {
    if hi < lo || lo < 2 {
        return Err(Error::InvalidParam(format!(
            "invalid prime-sampling interval [{lo}, {hi}]"
        )));
    }
    // By Bertrand-type density, width·(density) retries make failure on an
    // interval that does contain a prime astronomically unlikely; the cap
    // exists to reject prime-free intervals deterministically.
    let attempts = 64 * 1024;
    for _ in 0..attempts {
        let candidate = rng.gen_range(lo..=hi);
        if is_prime_u64(candidate) {
            return Ok(candidate);
        }
    }
    // Bounded retries exhausted: fall back to an exhaustive scan so small
    // prime-free intervals error out exactly.
    for candidate in lo..=hi {
        if is_prime_u64(candidate) {
            return Ok(candidate);
        }
    }
    Err(Error::NoPrimeInRange { lo, hi, attempts })
}

/// Folds a huge universe `[0, universe_size)` into a working range
/// `[0, target_range)`.
///
/// When the declared universe exceeds `m²` (for stream-length bound `m`), an
/// index is first reduced modulo a random prime `q` and then hashed pairwise
/// into the target range; with high probability over `q` no two of the ≤ m
/// distinct stream indices collide in the modular step. For small universes
/// the modular step is skipped and only the pairwise hash applies.
#[derive(Debug, Clone)]
pub struct UniverseReducer {
    /// Modular folding prime; `None` when the universe is already ≤ m².
    q: Option<u64>,
    inner: PairwiseHash,
}

impl UniverseReducer {
    /// Builds a reducer for a universe of `universe_size` indices, a stream of
    /// at most `stream_len` updates, and output range `target_range`.
    pub fn new(universe_size: u64, stream_len: u64, target_range: u64, seed: u64) -> Result<Self> {
        if universe_size == 0 || stream_len == 0 || target_range == 0 {
            return Err(Error::InvalidParam(
                "universe, stream length, and target range must be ≥ 1".into(),
            ));
        }
        let needs_fold = match stream_len.checked_mul(stream_len) {
            Some(m2) => universe_size > m2,
            None => false, // m² overflows u64 ⇒ universe certainly ≤ m²
        };
        let (q, inner_domain) = if needs_fold {
            // Prime window sized so that all ≤ m distinct indices survive the
            // modular fold without collision with probability close to 1:
            // any fixed difference < 2^64 has at most 64/log2(lo) prime
            // factors above lo, while [lo, 16·lo] contains ~15·lo/ln(lo)
            // primes.
            let m = stream_len as f64;
            let logn = (universe_size as f64).log2().max(1.0);
            let base = m * logn * (m * logn).log2().max(1.0);
            let lo = (base.max(64.0)) as u64;
            let hi = lo.saturating_mul(16);
            let mut rng = seeds::rng_from(seeds::split(seed, seeds::tags::UNIVERSE_Q, 0));
            let q = sample_prime(lo, hi, &mut rng)?;
            (Some(q), q)
        } else {
            (None, universe_size)
        };
        let inner = PairwiseHash::new(
            inner_domain,
            target_range,
            seeds::split(seed, seeds::tags::UNIVERSE_INNER, 0),
        )?;
        Ok(Self { q, inner })
    }

    /// Output range size.
    pub fn range_size(&self) -> u64 {
        self.inner.range_size()
    }

    /// Reduces index `i` into the working range. Deterministic per seed.
    #[inline]
    pub fn reduce(&self, i: u64) -> u64 {
        match self.q {
            Some(q) => self.inner.eval_unchecked(i % q),
            None => self.inner.eval_unchecked(i),
        }
    }
}
