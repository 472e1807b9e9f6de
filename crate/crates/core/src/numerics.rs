//! Closed-form helpers shared by the occupancy-based estimators: a
//! constant-time logarithm lookup table, the balls-into-bins occupancy map
//! `f(A)` and its inverse, and exact mean/variance formulas for the
//! good-ball/bad-ball occupancy process.

use crate::error::{Error, Result};

/// Natural log of `1 − c/K` by table lookup, with relative accuracy ε and
/// O(1) query cost.
///
/// The grid is geometric in `u = c/K`: points `u_min·(1+ε/15)^i` from
/// `u_min = 1/(2K)` up to `4/5`, each storing the exact `ln(1−u)`. Rounding a
/// query to the nearest grid point perturbs `u` by a factor `1 ± ε/30`, which
/// perturbs `ln(1−u)` by at most `u/(1−u)·ε/30` — at most `ε/6` of `|ln(1−u)|
/// ≥ u` for every `u ≤ 4/5`. A geometric grid in `1−u` itself could not do
/// this: near `u → 0` the logarithm vanishes linearly in `u`, so relative
/// accuracy requires resolution proportional to `u`.
///
/// Table size is `ln(1.6K)/ln(1+ε/15) = O(ε⁻¹ log K)` entries.
#[derive(Debug, Clone)]
pub struct FastLogTable {
    k: u64,
    eps: f64,
    /// Grid abscissas `u_i` (fractions of K, ascending).
    us: Vec<f64>,
    /// `ln(1 − u_i)` for each grid point.
    lns: Vec<f64>,
    /// Exact `ln(1 − 1/K)`, the denominator used by occupancy inversion.
    ln_denom: f64,
    /// `log2(1 + (j + 0.5)/256)` for the log-free index computation.
    mantissa_lut: Vec<f64>,
    /// `ln(2) / ln(1 + ε/15)`: converts a log2 estimate into grid steps.
    steps_per_octave: f64,
    u_min: f64,
    max_c: u64,
}

impl FastLogTable {
    /// Builds the lookup table for bin count `K` and accuracy `eps`.
    pub fn new(k: u64, eps: f64) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParam(format!(
                "fastlog table needs K ≥ 2, got {k}"
            )));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::InvalidParam(format!(
                "fastlog accuracy must lie in (0, 0.5), got {eps}"
            )));
        }
        let ratio = 1.0 + eps / 15.0;
        let u_min = 0.5 / k as f64;
        let u_max = 0.8;
        let len = ((u_max / u_min).ln() / ratio.ln()).ceil() as usize + 2;
        let mut us = Vec::with_capacity(len);
        let mut lns = Vec::with_capacity(len);
        let mut u = u_min;
        for _ in 0..len {
            us.push(u);
            lns.push((-u).ln_1p());
            u *= ratio;
        }
        let mantissa_lut = (0..256)
            .map(|j| (1.0 + (j as f64 + 0.5) / 256.0).log2())
            .collect();
        Ok(Self {
            k,
            eps,
            us,
            lns,
            ln_denom: (-1.0 / k as f64).ln_1p(),
            mantissa_lut,
            steps_per_octave: std::f64::consts::LN_2 / ratio.ln(),
            u_min,
            max_c: 4 * k / 5,
        })
    }

    /// Bin count K this table was built for.
    pub fn k(&self) -> u64 {
        self.k
    }

    /// Accuracy parameter ε this table was built for.
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Exact `ln(1 − 1/K)`.
    pub fn ln_denom(&self) -> f64 {
        self.ln_denom
    }

    /// Number of grid entries (for space accounting).
    pub fn entries(&self) -> usize {
        self.us.len()
    }

    /// Looks up `ln(1 − c/K)` for an integer `1 ≤ c ≤ 4K/5` with relative
    /// error at most ε.
    ///
    /// The grid index is computed without calling a logarithm: the binary
    /// exponent of `u/u_min` comes from the f64 bit pattern, a 256-entry
    /// mantissa table refines it, and a ±2 neighbor scan snaps to the closest
    /// grid point.
    pub fn query(&self, c: u64) -> Result<f64> {
        if c < 1 || c > self.max_c {
            return Err(Error::OutOfTableRange(format!(
                "fastlog input c = {c} outside [1, {}] for K = {}",
                self.max_c, self.k
            )));
        }
        let u = c as f64 / self.k as f64;
        let f = u / self.u_min; // ≥ 1 by construction of u_min
        let bits = f.to_bits();
        let exponent = ((bits >> 52) as i64 - 1023) as f64;
        let mantissa_idx = ((bits >> 44) & 0xFF) as usize;
        let log2_f = exponent + self.mantissa_lut[mantissa_idx];
        let mut idx = (log2_f * self.steps_per_octave).round() as isize;
        let last = self.us.len() as isize - 1;
        idx = idx.clamp(0, last);
        // Snap to the nearest grid point among the ±2 neighborhood.
        let lo = (idx - 2).max(0) as usize;
        let hi = (idx + 2).min(last) as usize;
        let mut best = lo;
        let mut best_gap = (self.us[lo] - u).abs();
        for i in lo + 1..=hi {
            let gap = (self.us[i] - u).abs();
            if gap < best_gap {
                best_gap = gap;
                best = i;
            }
        }
        Ok(self.lns[best])
    }
}

/// Expected number of bins that contain at least one ball but would lose it
/// under a doubled load: `f(A) = K((1−1/K)^A − (1−1/K)^{2A})`.
///
/// `f` is increasing on `[0, K/3]` with derivative ≥ 1/9 there, which makes
/// that branch cleanly invertible.
pub fn f_occupancy(a: f64, k: u64) -> f64 {
    assert!(a >= 0.0, "ball count must be nonnegative");
    assert!(k >= 1);
    let t = (a * (-1.0 / k as f64).ln_1p()).exp(); // (1 − 1/K)^A
    k as f64 * t * (1.0 - t)
}

/// Inverts [`f_occupancy`] on its monotone branch `A ∈ [0, K/3]` by bisection,
/// stopping when the bracket is narrower than `tol` (so the answer is within
/// `tol` of the true preimage).
///
/// Errors if `y` lies outside `[0, f(K/3)]` (beyond the invertible range).
pub fn invert_f(y: f64, k: u64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParam(format!(
            "inversion tolerance must be positive, got {tol}"
        )));
    }
    let upper = k as f64 / 3.0;
    let y_max = f_occupancy(upper, k);
    if !(0.0..=y_max * (1.0 + 1e-12) + 1e-12).contains(&y) {
        return Err(Error::OutOfTableRange(format!(
            "occupancy {y} outside invertible range [0, {y_max:.6}] for K = {k}"
        )));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0f64, upper);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if f_occupancy(mid, k) < y {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact expected occupancy for the good-ball/bad-ball process: `A` good
/// balls and `B` bad balls thrown uniformly into `K` bins, counting bins with
/// at least one good ball and no bad ball:
/// `E[X] = K(1 − (1−1/K)^A)(1−1/K)^B`.
pub fn bb_mean(a: u64, b: u64, k: u64) -> f64 {
    assert!(k >= 1);
    let kf = k as f64;
    let lz = (-1.0 / kf).ln_1p(); // ln(1 − 1/K)
    let one_minus_za = -(a as f64 * lz).exp_m1(); // 1 − (1−1/K)^A
    kf * one_minus_za * (b as f64 * lz).exp()
}

/// Exact variance of the same occupancy count, via the three-term closed
/// form. The middle term's `1 − 2(1−1/K)^A + (1−2/K)^A` factor suffers
/// catastrophic cancellation for small `A`, so it is evaluated as
/// `(1 − z^A) − (z^A − w^A)` with each difference computed through `expm1`,
/// and the final terms are combined with compensated (Neumaier) summation.
/// Residual round-off is below `10⁻⁹·K²` throughout the tested ranges.
pub fn bb_variance(a: u64, b: u64, k: u64) -> f64 {
    assert!(k >= 1);
    let kf = k as f64;
    let lz = (-1.0 / kf).ln_1p(); // ln(1 − 1/K)
    let lw = (-2.0 / kf).ln_1p(); // ln(1 − 2/K)
    let af = a as f64;
    let bf = b as f64;
    let za = (af * lz).exp(); // (1−1/K)^A
    let one_minus_za = -(af * lz).exp_m1(); // 1 − z^A, accurate for small A/K
    let za_minus_wa = -za * (af * (lw - lz)).exp_m1(); // z^A − w^A
    let t1 = kf * one_minus_za * (bf * lz).exp();
    let t2 = kf * (kf - 1.0) * (bf * lw).exp() * (one_minus_za - za_minus_wa);
    let t3 = -(kf * one_minus_za) * (kf * one_minus_za) * (2.0 * bf * lz).exp();
    neumaier_sum(&[t1, t2, t3])
}

/// Occupancy-count inversion `ln(1 − occupied/K) / ln(1 − 1/K)`: the number
/// of balls that, in expectation, leaves `occupied` of `K` bins nonempty.
/// The numerator goes through the fast-log table; the denominator is the
/// table's exact precomputed value.
///
/// Errors if `occupied > 4K/5` (table saturation) or if the table was built
/// for a different K.
pub fn estimate_from_occupancy(occupied: u64, k: u64, table: &FastLogTable) -> Result<f64> {
    if table.k() != k {
        return Err(Error::InvalidParam(format!(
            "fastlog table built for K = {} but queried with K = {k}",
            table.k()
        )));
    }
    if occupied == 0 {
        return Ok(0.0);
    }
    Ok(table.query(occupied)? / table.ln_denom())
}

/// Exact occupancy-count inversion `ln(1 − occupied/K) / ln(1 − 1/K)`
/// computed with `ln_1p` (no table): the expected number of distinct balls
/// that leaves `occupied` of `K` bins nonempty. `occupied` is clamped to
/// `K − 1` so the result stays finite at full occupancy.
pub fn occupancy_inversion(occupied: u64, k: u64) -> f64 {
    assert!(k >= 2, "need at least two bins");
    let c = occupied.min(k - 1) as f64;
    let kf = k as f64;
    (-(c / kf)).ln_1p() / (-(1.0 / kf)).ln_1p()
}

/// Neumaier's compensated summation; exact enough to keep the variance
/// formula's cancellation error below the declared `10⁻⁹·K²` bound.
fn neumaier_sum(terms: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    const LN_HALF: f64 = -0.693_147_180_559_945_3;
    const LN_99_OVER_100: f64 = -0.010_050_335_853_501_44;

    #[test]
    fn table_construction_validates_parameters() {
        assert!(FastLogTable::new(1, 0.1).is_err());
        assert!(FastLogTable::new(100, 0.0).is_err());
        assert!(FastLogTable::new(100, 0.7).is_err());
    }

    #[test]
    fn fastlog_reference_points() {
        let t = FastLogTable::new(100, 0.1).unwrap();
        let q50 = t.query(50).unwrap();
        assert!((q50 - LN_HALF).abs() / LN_HALF.abs() <= 0.1);
        let q1 = t.query(1).unwrap();
        assert!((q1 - LN_99_OVER_100).abs() / LN_99_OVER_100.abs() <= 0.1);
    }

    #[test]
    fn fastlog_rejects_out_of_range_inputs() {
        let t = FastLogTable::new(100, 0.1).unwrap();
        assert!(t.query(0).is_err());
        assert!(t.query(80).is_ok());
        assert!(t.query(81).is_err());
    }

    #[test]
    fn fastlog_exhaustive_relative_error_k100() {
        let t = FastLogTable::new(100, 0.1).unwrap();
        for c in 1..=80u64 {
            let exact = (-(c as f64) / 100.0).ln_1p();
            let got = t.query(c).unwrap();
            let rel = (got - exact).abs() / exact.abs();
            assert!(rel <= 0.1, "c = {c}: rel err {rel}");
        }
    }

    #[test]
    fn fastlog_table_size_is_compact() {
        let t = FastLogTable::new(100, 0.1).unwrap();
        // ~ (15/ε)·ln(1.6K) entries; far below K.
        assert!(t.entries() < 1200, "table has {} entries", t.entries());
    }

    #[test]
    fn occupancy_map_reference_points() {
        assert_eq!(f_occupancy(0.0, 100), 0.0);
        // 100·(0.99^10 − 0.99^20), high-precision evaluation.
        let f10 = f_occupancy(10.0, 100);
        assert!((f10 - 8.647_513_741_157_362).abs() < 1e-9, "f(10) = {f10}");
        let f33 = f_occupancy(33.0, 100);
        assert!((f33 - 20.259_341_517_447_146).abs() < 1e-9, "f(33) = {f33}");
    }

    #[test]
    fn occupancy_map_increments_stay_above_derivative_bound() {
        // On [0, K/3] the derivative stays ≥ 1/9, so unit steps must grow by
        // at least 1/9 − 10⁻⁶.
        let k = 100u64;
        for a in 0..(k / 3) {
            let gap = f_occupancy(a as f64 + 1.0, k) - f_occupancy(a as f64, k);
            assert!(gap >= 1.0 / 9.0 - 1e-6, "A = {a}: increment {gap}");
        }
    }

    #[test]
    fn inversion_round_trip_and_range_errors() {
        assert_eq!(invert_f(0.0, 100, 0.01).unwrap(), 0.0);
        let a = invert_f(f_occupancy(10.0, 100), 100, 0.01).unwrap();
        assert!((9.99..=10.01).contains(&a), "round trip gave {a}");
        // Beyond f(K/3) the map is no longer invertible on this branch.
        let y_max = f_occupancy(100.0 / 3.0, 100);
        assert!(invert_f(y_max + 0.5, 100, 0.01).is_err());
        assert!(invert_f(-0.5, 100, 0.01).is_err());
        assert!(invert_f(1.0, 100, 0.0).is_err());
    }

    #[test]
    fn inversion_error_tracks_derivative_bound() {
        // |A − Â| ≤ 9·|f(A) − f(Â)| on the monotone branch: spot-check by
        // perturbing f values.
        let k = 100u64;
        for a in [1.0f64, 5.0, 15.0, 30.0] {
            let y = f_occupancy(a, k);
            let perturbed = invert_f((y - 0.05).max(0.0), k, 1e-6).unwrap();
            assert!(
                (perturbed - a).abs() <= 9.0 * 0.05 + 1e-3,
                "A = {a}: inverse moved {}",
                (perturbed - a).abs()
            );
        }
    }

    #[test]
    fn occupancy_count_estimator_reference_points() {
        let t = FastLogTable::new(100, 0.1).unwrap();
        assert_eq!(estimate_from_occupancy(0, 100, &t).unwrap(), 0.0);
        // ln(0.5)/ln(0.99) — high-precision value 68.96756…
        let e = estimate_from_occupancy(50, 100, &t).unwrap();
        let exact = 68.967_563_936_528_49;
        assert!((e - exact).abs() / exact <= 0.2, "estimate {e}");
        assert!(estimate_from_occupancy(81, 100, &t).is_err());
        let wrong_k = FastLogTable::new(200, 0.1).unwrap();
        assert!(estimate_from_occupancy(50, 100, &wrong_k).is_err());
    }

    #[test]
    fn occupancy_count_estimator_is_monotone() {
        let t = FastLogTable::new(400, 0.05).unwrap();
        let mut prev = 0.0;
        for c in 1..=320u64 {
            let e = estimate_from_occupancy(c, 400, &t).unwrap();
            assert!(e >= prev - 1e-12, "dip at c = {c}");
            prev = e;
        }
    }

    #[test]
    fn bb_mean_reference_points() {
        assert_eq!(bb_mean(0, 7, 100), 0.0);
        let m1 = bb_mean(10, 0, 100);
        assert!((m1 - 9.561_792_499_119_551).abs() < 1e-9, "mean {m1}");
        let m2 = bb_mean(10, 5, 100);
        assert!((m2 - 9.093_169_525_871_148).abs() < 1e-9, "mean {m2}");
    }

    #[test]
    fn bb_variance_reference_points() {
        // One good ball always lands in exactly one bin: zero variance.
        assert!(bb_variance(1, 0, 100).abs() < 1e-10);
        let v1 = bb_variance(10, 0, 100);
        assert!((v1 - 0.389_619_715_285_953_5).abs() < 1e-9, "var {v1}");
        let v2 = bb_variance(10, 5, 100);
        assert!((v2 - 0.760_078_107_938_928_6).abs() < 1e-9, "var {v2}");
        let v3 = bb_variance(100, 0, 400);
        assert!((v3 - 8.214_256_603_034_474).abs() < 1e-8, "var {v3}");
        let v4 = bb_variance(100, 100, 400);
        assert!((v4 - 17.294_533_341_080_628).abs() < 1e-8, "var {v4}");
    }

    #[test]
    fn bb_variance_is_nonnegative_up_to_roundoff() {
        for k in [10u64, 100, 400] {
            for a in [0u64, 1, 2, 5, k / 4, k / 2, k] {
                for b in [0u64, 1, k / 4, k] {
                    let v = bb_variance(a, b, k);
                    assert!(
                        v >= -1e-9 * (k as f64) * (k as f64),
                        "Var({a},{b},{k}) = {v}"
                    );
                }
            }
        }
    }

    #[test]
    fn bb_mean_stays_large_for_big_ball_counts() {
        // Mean ≥ K/500 whenever A ≥ K/160 and A, B ≤ K/2.
        for k in [160u64, 400, 1000] {
            let mut a = k / 160;
            while a <= k / 2 {
                let mut b = 0u64;
                while b <= k / 2 {
                    let m = bb_mean(a, b, k);
                    assert!(m >= k as f64 / 500.0, "E[X]({a},{b},{k}) = {m}");
                    b = (b + k / 8).max(b + 1);
                }
                a = (a + k / 16).max(a + 1);
            }
        }
    }

    #[test]
    fn bb_mean_is_stable_under_bad_ball_perturbation() {
        // Changing B by ±εB moves the mean by at most a (1 ± 2ε) factor.
        for k in [100u64, 400] {
            for a in [k / 50, k / 10, k / 2] {
                for b in [k / 20, k / 4, k / 2, k] {
                    let base = bb_mean(a, b, k);
                    for eps in [0.1f64, 0.2, 0.3] {
                        let delta = (eps * b as f64).round() as u64;
                        let hi = bb_mean(a, b - delta.min(b), k);
                        let lo = bb_mean(a, b + delta, k);
                        assert!(hi <= base * (1.0 + 2.0 * eps) + 1e-12);
                        assert!(lo >= base * (1.0 - 2.0 * eps) - 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn bb_variance_bad_ball_bound_spot_checks() {
        // A = B = K/4 keeps the variance at most 7K.
        for k in [100u64, 400, 1000, 10_000] {
            let v = bb_variance(k / 4, k / 4, k);
            assert!(v <= 7.0 * k as f64, "Var(K/4,K/4,{k}) = {v}");
        }
    }
}
