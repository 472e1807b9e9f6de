//! Update-path and hashing micro-benchmarks.
//!
//! Each sketch benchmark clones a pristine sketch outside the timed section
//! and streams a fixed 4096-update batch through it, so the reported time
//! divided by 4096 is the per-update cost at a realistic configuration and
//! the declared stream-length bounds are never at risk of being exhausted.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use normsketch::hashing::KWiseHash;
use normsketch::{F0Config, F0Sketch, L0Config, L0FullSketch, LpConfig, LpSketch};
use normsketch_bench::turnstile_updates;

const UNIVERSE: u64 = 1 << 20;
const BATCH: usize = 4_096;
const MAX_INC: i64 = 100;

fn bench_lp_update(c: &mut Criterion) {
    let updates = turnstile_updates(UNIVERSE, BATCH, MAX_INC, 1);
    let mut group = c.benchmark_group("lp_update");
    group.throughput(Throughput::Elements(BATCH as u64));
    // Each sample streams thousands of updates through thousands of rows;
    // keep the sample count low so the suite stays quick.
    group.sample_size(20);
    for &p in &[0.5_f64, 1.0] {
        // 10⁵ is the largest stream bound the p = 0.5 discretization budget
        // admits at this accuracy and increment size.
        let config = LpConfig::new(p, 0.1, UNIVERSE, 100_000, MAX_INC as u64);
        let pristine = LpSketch::new(config, 7).unwrap();
        group.bench_function(format!("p_{p}"), |b| {
            b.iter_batched_ref(
                || pristine.clone(),
                |sketch| {
                    for &(i, v) in &updates {
                        sketch.update(black_box(i), black_box(v)).unwrap();
                    }
                },
                BatchSize::LargeInput,
            );
        });
    }
    group.finish();
}

fn bench_l0_update(c: &mut Criterion) {
    let updates = turnstile_updates(UNIVERSE, BATCH, 1, 2);
    let mut group = c.benchmark_group("l0_update");
    group.throughput(Throughput::Elements(BATCH as u64));
    group.sample_size(20);
    let config = L0Config::new(0.15, UNIVERSE, 100_000_000, 1);
    let pristine = L0FullSketch::new(config, 7).unwrap();
    group.bench_function("eps_0.15", |b| {
        b.iter_batched_ref(
            || pristine.clone(),
            |sketch| {
                for &(i, v) in &updates {
                    sketch.update(black_box(i), black_box(v)).unwrap();
                }
            },
            BatchSize::LargeInput,
        );
    });
    group.finish();
}

fn bench_f0_update(c: &mut Criterion) {
    let updates = turnstile_updates(UNIVERSE, BATCH, 1, 3);
    let mut group = c.benchmark_group("f0_update");
    group.throughput(Throughput::Elements(BATCH as u64));
    group.sample_size(20);
    let config = F0Config::new(0.1, UNIVERSE, 100_000_000);
    let pristine = F0Sketch::new(config, 11).unwrap();
    group.bench_function("eps_0.1", |b| {
        b.iter_batched_ref(
            || pristine.clone(),
            |sketch| {
                for &(i, _) in &updates {
                    sketch.update(black_box(i)).unwrap();
                }
            },
            BatchSize::LargeInput,
        );
    });
    group.finish();
}

fn bench_hash_eval(c: &mut Criterion) {
    let mut group = c.benchmark_group("hash_eval");
    group.throughput(Throughput::Elements(BATCH as u64));
    for &k in &[2u32, 4, 8] {
        let hash = KWiseHash::new(k, UNIVERSE, 1 << 16, 7).unwrap();
        group.bench_function(format!("{k}_wise"), |b| {
            b.iter(|| {
                let mut acc = 0u64;
                for x in 0..BATCH as u64 {
                    acc ^= hash.eval_unchecked(black_box(x));
                }
                acc
            });
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    bench_lp_update,
    bench_l0_update,
    bench_f0_update,
    bench_hash_eval
);
criterion_main!(benches);
