//! Streaming sketches for norm and distinct-count estimation.
//!
//! This crate implements three families of small-space stream summaries,
//! together with the exact oracles and Monte-Carlo harnesses used to validate
//! them:
//!
//! * [`lp::LpSketch`] — estimates the p-norm `L_p = (Σ|a_i|^p)^{1/p}` of a
//!   turnstile frequency vector for `0 < p < 2`, using discretized p-stable
//!   projections (Chambers–Mallows–Stuck sampling) and a cosine-based
//!   refinement of a median rough estimate.
//! * [`l0::L0FullSketch`] — estimates `L_0 = |{i : a_i ≠ 0}|` of a turnstile
//!   stream (insertions *and* deletions), combining a constant-factor rough
//!   estimator with subsampled occupancy estimators over a random prime field.
//! * [`f0::F0Sketch`] — estimates the number of distinct items `F_0` of an
//!   insertion-only stream via max-level bin occupancy and inversion of the
//!   balls-into-bins collision map.
//!
//! Supporting modules: [`hashing`] (k-wise independent polynomial hashing over
//! the Mersenne prime `2^61 − 1`, prime sampling, universe reduction),
//! [`stable`] (p-stable variate generation), [`numerics`] (constant-time
//! logarithm lookup, occupancy closed forms), [`oracle`] (exact stream
//! statistics, balls-and-bins simulation, trial harness), and [`stream`]
//! (stream file formats and synthetic generators).
//!
//! All randomness is derived from explicit 64-bit seeds through the splittable
//! generator in [`seeds`]; every estimate in this crate is a deterministic
//! function of `(stream, seed, parameters)`.

pub mod error;
pub mod f0;
pub mod hashing;
pub mod l0;
pub mod lp;
pub mod numerics;
pub mod oracle;
pub mod seeds;
pub(crate) mod serial;
pub mod stable;
pub mod stream;

pub use error::{Error, Result};
pub use f0::{F0Branch, F0Config, F0Estimate, F0Sketch};
pub use l0::{
    two_pass_estimate, ExactSmallL0, L0Config, L0Estimate, L0FullSketch, LeEstimate, LogEstimator,
    RoughEstimator, TwoPassReport,
};
pub use lp::{LpConfig, LpEstimate, LpSketch};
pub use oracle::{
    bb_simulate, run_trials, BbSample, EstimatorSpec, ExactStats, Independence, TrialReport,
};
pub use stream::{
    generate_file, open_stream, read_binary, read_text, write_binary, write_text, GeneratorIter,
    GeneratorKind, GeneratorSpec, StreamFile, StreamHeader, StreamModel,
};
