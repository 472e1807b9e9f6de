//! Shared input synthesis for the micro-benchmarks.

use normsketch::seeds::rng_from;
use rand::Rng;

/// Deterministic batch of `len` signed turnstile updates over `[0, universe)`
/// with magnitudes in `[1, max_increment]`.
pub fn turnstile_updates(
    universe: u64,
    len: usize,
    max_increment: i64,
    seed: u64,
) -> Vec<(u64, i64)> {
    let mut rng = rng_from(seed);
    (0..len)
        .map(|_| {
            let i = rng.gen_range(0..universe);
            let mag = rng.gen_range(1..=max_increment);
            (i, if rng.gen::<bool>() { mag } else { -mag })
        })
        .collect()
}
