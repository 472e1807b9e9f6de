//! Command-line front end for the sketch library.
//!
//! Three subcommands:
//!
//! * `sketch` — run one sketch over a stream file (or stdin) and print a JSON
//!   report with the estimate, state size, update-latency percentiles, and
//!   any breakdown flags.
//! * `bench` — generate a synthetic stream, run many independently seeded
//!   copies of an estimator over it, and print the success-rate report;
//!   exits nonzero when the rate falls below `--gate`.
//! * `generate` — write a synthetic stream to a file in the text or binary
//!   format.
//!
//! Every run is reproducible from its flags and seeds alone; the only
//! nondeterministic outputs are wall-clock timing fields.

use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use normsketch::l0::two_pass_estimate;
use normsketch::oracle::{run_trials, EstimatorSpec, ExactStats};
use normsketch::seeds::rng_from;
use normsketch::stream::{
    generate_file, open_stream, read_binary, read_text, GeneratorKind, GeneratorSpec,
    StreamHeader, StreamModel, STREAM_MAGIC,
};
use normsketch::{
    F0Branch, F0Config, F0Sketch, L0Config, L0FullSketch, LpConfig, LpSketch,
};

/// Updates excluded from latency percentiles while caches and branch
/// predictors settle.
const WARMUP_UPDATES: u64 = 10_000;
/// Reservoir size for latency sampling; keeps memory O(1) in stream length.
const LATENCY_RESERVOIR: usize = 1 << 18;

#[derive(Parser)]
#[command(
    name = "normsketch",
    version,
    about = "Streaming sketches for p-norms, turnstile support size, and distinct counts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one sketch over a stream and print a JSON report.
    Sketch(SketchArgs),
    /// Measure an estimator's success rate over seeded Monte-Carlo trials.
    Bench(BenchArgs),
    /// Generate a synthetic stream file.
    Generate(GenerateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Algorithm {
    /// p-norm sketch (turnstile, 0 < p < 2).
    Lp,
    /// Support-size sketch (turnstile, counts indices with nonzero net frequency).
    L0,
    /// Distinct-count sketch (insertion-only streams).
    F0,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum BenchAlgorithm {
    /// p-norm sketch.
    Lp,
    /// Support-size sketch, single pass.
    L0,
    /// Support-size estimator, two passes per trial.
    #[value(name = "l0-2pass")]
    L0TwoPass,
    /// Distinct-count sketch.
    F0,
    /// Exact oracle reporting L_p itself (validates the harness).
    ExactLp,
    /// Exact oracle reporting the support size itself.
    ExactL0,
    /// Exact oracle reporting the distinct count itself.
    ExactF0,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum GeneratorName {
    /// Fixed number of distinct items, extra insertions uniform over them.
    Uniform,
    /// Zipf-shaped frequencies over the distinct items.
    Zipf,
    /// Insert items, then delete a fraction of them.
    Cancel,
    /// Small live support with insert/delete churn.
    PromiseSmallL0,
}

#[derive(Args)]
struct SketchArgs {
    /// Which sketch to run.
    #[arg(long, value_enum)]
    algorithm: Algorithm,
    /// Stream file to read; "-" reads from stdin (single pass only).
    #[arg(long)]
    input: PathBuf,
    /// Accuracy parameter ε.
    #[arg(long)]
    epsilon: f64,
    /// Norm exponent p ∈ (0, 2); required by (and only valid with) `--algorithm lp`.
    #[arg(long)]
    p: Option<f64>,
    /// Master seed; the estimate is a deterministic function of
    /// (stream, seed, parameters).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Passes over the input: 2 runs the two-pass support-size estimator
    /// (pass 1 sizes it, pass 2 instantiates one level estimator per copy).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
    passes: u8,
    /// Size the support-size sketch with the conservative constants from the
    /// formal analysis instead of the practical defaults.
    #[arg(long)]
    analysis_constants: bool,
    /// Also replay the stream through the exact oracle, adding `exact` and
    /// `relative_error` to the report.
    #[arg(long)]
    exact: bool,
    /// Enforce the strict-turnstile promise while parsing (needs memory
    /// proportional to the number of distinct indices).
    #[arg(long)]
    verify: bool,
    /// Split the stream round-robin across this many same-seed sketches and
    /// merge them; the merged report equals the single-sketch run.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..=1024))]
    shards: u32,
}

#[derive(Args)]
struct BenchArgs {
    /// Which estimator to measure.
    #[arg(long, value_enum)]
    algorithm: BenchAlgorithm,
    /// Number of independently seeded trials.
    #[arg(long)]
    trials: u64,
    /// Relative-error threshold defining a successful trial (also the
    /// sketch's accuracy parameter).
    #[arg(long)]
    epsilon: f64,
    /// Norm exponent for the p-norm estimators.
    #[arg(long)]
    p: Option<f64>,
    /// Master seed; per-trial sketch seeds derive from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Exit nonzero when successes/trials falls below this rate.
    #[arg(long, default_value_t = 0.0)]
    gate: f64,
    /// Include the mean wall-clock update time in the report. Off by
    /// default so reruns with the same flags emit byte-identical JSON.
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    generator: GeneratorArgs,
    /// Output file path.
    #[arg(long)]
    output: PathBuf,
    /// Write the length-prefixed binary format instead of text.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct GeneratorArgs {
    /// Synthetic stream family.
    #[arg(long, value_enum)]
    generator: GeneratorName,
    /// Universe size n.
    #[arg(long)]
    universe: u64,
    /// Distinct items the stream is built around (its exact F₀, and its
    /// exact L₀ before any cancellation).
    #[arg(long)]
    target: u64,
    /// Stream length; 0 derives the minimum for the family.
    #[arg(long, default_value_t = 0)]
    length: u64,
    /// Zipf exponent (required by `--generator zipf`).
    #[arg(long)]
    zipf_s: Option<f64>,
    /// Fraction of inserted items subsequently deleted (required by
    /// `--generator cancel`).
    #[arg(long)]
    fraction: Option<f64>,
    /// Seed of the generator itself, distinct from any sketch seed.
    #[arg(long, default_value_t = 0)]
    stream_seed: u64,
}

impl GeneratorArgs {
    fn to_spec(&self) -> anyhow::Result<GeneratorSpec> {
        if self.generator != GeneratorName::Zipf && self.zipf_s.is_some() {
            bail!("--zipf-s only applies to --generator zipf");
        }
        if self.generator != GeneratorName::Cancel && self.fraction.is_some() {
            bail!("--fraction only applies to --generator cancel");
        }
        let kind = match self.generator {
            GeneratorName::Uniform => GeneratorKind::Uniform,
            GeneratorName::Zipf => GeneratorKind::Zipf {
                s: self.zipf_s.context("--generator zipf needs --zipf-s")?,
            },
            GeneratorName::Cancel => GeneratorKind::Cancel {
                fraction: self.fraction.context("--generator cancel needs --fraction")?,
            },
            GeneratorName::PromiseSmallL0 => GeneratorKind::PromiseSmallL0,
        };
        let spec = GeneratorSpec {
            kind,
            universe: self.universe,
            target: self.target,
            length: self.length,
            seed: self.stream_seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// Report schemas
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct SketchParams {
    epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    seed: u64,
    passes: u8,
    analysis_constants: bool,
    shards: u32,
    n: u64,
    m: u64,
    magnitude: u64,
    model: String,
}

#[derive(Serialize, Default)]
struct BreakdownFlags {
    /// p-norm sketch: the cosine refinement broke down and the output fell
    /// back to a constant-factor median estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    used_fallback: Option<bool>,
    /// Support-size sketch: a majority of consulted occupancy estimators
    /// were saturated.
    #[serde(skip_serializing_if = "Option::is_none")]
    saturated: Option<bool>,
    /// Distinct-count sketch: the subsampled read-out had to clamp.
    #[serde(skip_serializing_if = "Option::is_none")]
    breakdown: Option<bool>,
}

#[derive(Serialize)]
struct TwoPassDetail {
    rough_estimate: u64,
    selected_level: Option<u32>,
    pass2_levels_per_copy: usize,
    pass2_total_les: usize,
}

#[derive(Serialize)]
struct SketchReport {
    schema: u32,
    algorithm: &'static str,
    params: SketchParams,
    estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    relative_error: Option<f64>,
    /// Null when every update fell inside the warmup window, or in two-pass
    /// mode (which does not time individual updates).
    update_ns_p50: Option<f64>,
    update_ns_p99: Option<f64>,
    bytes_used: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    bytes_level_estimators: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bytes_rough_estimator: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    two_pass: Option<TwoPassDetail>,
    breakdown_flags: BreakdownFlags,
}

#[derive(Serialize)]
struct GenerateReport {
    schema: u32,
    path: String,
    format: &'static str,
    updates: u64,
    n: u64,
    m: u64,
    magnitude: u64,
    model: String,
    stream_seed: u64,
}

// ---------------------------------------------------------------------------
// Input handling
// ---------------------------------------------------------------------------

enum Input {
    Stdin,
    File(PathBuf),
}

impl Input {
    fn from_path(path: &Path) -> Self {
        if path == Path::new("-") {
            Input::Stdin
        } else {
            Input::File(path.to_path_buf())
        }
    }
}

type UpdateIter = Box<dyn Iterator<Item = normsketch::Result<(u64, i64)>>>;

fn open_input(input: &Input, verify: bool) -> anyhow::Result<(StreamHeader, UpdateIter)> {
    match input {
        Input::File(path) => {
            let (header, updates) = open_stream(path, verify)
                .with_context(|| format!("reading {}", path.display()))?;
            Ok((header, Box::new(updates)))
        }
        Input::Stdin => {
            let mut reader = std::io::BufReader::new(std::io::stdin().lock());
            let looks_binary = {
                let head = reader.fill_buf().context("reading stdin")?;
                head.len() >= 4 && head[..4] == STREAM_MAGIC.to_le_bytes()
            };
            if looks_binary {
                let (header, updates) =
                    read_binary(reader, verify).context("reading stdin")?;
                Ok((header, Box::new(updates)))
            } else {
                let (header, updates) = read_text(reader, verify).context("reading stdin")?;
                Ok((header, Box::new(updates)))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Latency sampling
// ---------------------------------------------------------------------------

/// Uniform reservoir over per-update latencies, so percentile memory stays
/// O(1) however long the stream is.
struct LatencyReservoir {
    samples: Vec<u64>,
    seen: u64,
    rng: normsketch::seeds::ChaCha8Rng,
}

impl LatencyReservoir {
    fn new(seed: u64) -> Self {
        Self {
            samples: Vec::new(),
            seen: 0,
            rng: rng_from(seed),
        }
    }

    fn record(&mut self, nanos: u64) {
        self.seen += 1;
        if self.samples.len() < LATENCY_RESERVOIR {
            self.samples.push(nanos);
        } else {
            let j = self.rng.gen_range(0..self.seen);
            if (j as usize) < LATENCY_RESERVOIR {
                self.samples[j as usize] = nanos;
            }
        }
    }

    /// Nearest-rank percentiles; `None` before any sample lands.
    fn percentiles(mut self, qs: &[f64]) -> Vec<Option<f64>> {
        if self.samples.is_empty() {
            return qs.iter().map(|_| None).collect();
        }
        self.samples.sort_unstable();
        let n = self.samples.len();
        qs.iter()
            .map(|q| {
                let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
                Some(self.samples[rank - 1] as f64)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// sketch subcommand
// ---------------------------------------------------------------------------

enum AnySketch {
    Lp(LpSketch),
    L0(L0FullSketch),
    F0(F0Sketch),
}

impl AnySketch {
    fn update(&mut self, i: u64, v: i64) -> normsketch::Result<()> {
        match self {
            AnySketch::Lp(s) => s.update(i, v),
            AnySketch::L0(s) => s.update(i, v),
            AnySketch::F0(s) => s.update(i),
        }
    }

    fn merge(&self, other: &AnySketch) -> anyhow::Result<AnySketch> {
        Ok(match (self, other) {
            (AnySketch::Lp(a), AnySketch::Lp(b)) => AnySketch::Lp(a.merge(b)?),
            (AnySketch::L0(a), AnySketch::L0(b)) => AnySketch::L0(a.merge(b)?),
            (AnySketch::F0(a), AnySketch::F0(b)) => AnySketch::F0(a.merge(b)?),
            _ => unreachable!("shards share one algorithm"),
        })
    }

    fn state_bytes(&self) -> usize {
        match self {
            AnySketch::Lp(s) => s.state_bytes(),
            AnySketch::L0(s) => s.state_bytes(),
            AnySketch::F0(s) => s.state_bytes(),
        }
    }
}

fn branch_name(branch: F0Branch) -> &'static str {
    match branch {
        F0Branch::SmallRough => "small-rough",
        F0Branch::Occupancy => "occupancy",
        F0Branch::Subsampled => "subsampled",
    }
}

fn relative_error(estimate: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        if estimate == 0.0 {
            0.0
        } else {
            // serde_json serializes non-finite floats as null.
            f64::INFINITY
        }
    } else {
        (estimate - truth).abs() / truth
    }
}

fn cmd_sketch(args: &SketchArgs) -> anyhow::Result<ExitCode> {
    match args.algorithm {
        Algorithm::Lp => {
            let p = args.p.context("--algorithm lp needs --p")?;
            if !(p.is_finite() && p > 0.0 && p < 2.0) {
                bail!("--p must lie strictly inside (0, 2), got {p}");
            }
        }
        Algorithm::L0 | Algorithm::F0 => {
            if args.p.is_some() {
                bail!("--p only applies to --algorithm lp");
            }
        }
    }
    if args.analysis_constants && args.algorithm != Algorithm::L0 {
        bail!("--analysis-constants only applies to --algorithm l0");
    }
    let input = Input::from_path(&args.input);
    if args.passes == 2 {
        if args.algorithm != Algorithm::L0 {
            bail!("--passes 2 only applies to --algorithm l0");
        }
        if matches!(input, Input::Stdin) {
            bail!("two passes need a seekable input file, not stdin");
        }
        if args.shards > 1 {
            bail!("--shards only applies to single-pass runs");
        }
        return cmd_sketch_two_pass(args);
    }

    let (header, updates) = open_input(&input, args.verify)?;
    if args.algorithm == Algorithm::F0 && header.model != StreamModel::InsertionOnly {
        bail!(
            "the distinct-count sketch needs an insertion-only stream, \
             but the input declares model {}",
            header.model
        );
    }

    let build = || -> anyhow::Result<AnySketch> {
        Ok(match args.algorithm {
            Algorithm::Lp => {
                let config = LpConfig::new(
                    args.p.unwrap(),
                    args.epsilon,
                    header.n,
                    header.m,
                    header.magnitude,
                );
                AnySketch::Lp(LpSketch::new(config, args.seed)?)
            }
            Algorithm::L0 => {
                let mut config =
                    L0Config::new(args.epsilon, header.n, header.m, header.magnitude);
                if args.analysis_constants {
                    config = config.with_analysis_constants();
                }
                AnySketch::L0(L0FullSketch::new(config, args.seed)?)
            }
            Algorithm::F0 => {
                let config = F0Config::new(args.epsilon, header.n, header.m);
                AnySketch::F0(F0Sketch::new(config, args.seed)?)
            }
        })
    };

    let mut shards: Vec<AnySketch> = (0..args.shards)
        .map(|_| build())
        .collect::<anyhow::Result<_>>()?;
    let mut stats = args.exact.then(ExactStats::new);
    let mut reservoir = LatencyReservoir::new(args.seed);
    let mut index = 0u64;
    for update in updates {
        let (i, v) = update?;
        let shard = &mut shards[(index % args.shards as u64) as usize];
        let start = Instant::now();
        shard.update(i, v)?;
        let nanos = start.elapsed().as_nanos() as u64;
        if index >= WARMUP_UPDATES {
            reservoir.record(nanos);
        }
        if let Some(stats) = stats.as_mut() {
            stats.update(i, v);
        }
        index += 1;
    }

    let mut merged = shards.remove(0);
    for shard in &shards {
        merged = merged.merge(shard)?;
    }

    let (estimate, flags, branch, bytes_le, bytes_re) = match &merged {
        AnySketch::Lp(s) => {
            let e = s.estimate();
            let flags = BreakdownFlags {
                used_fallback: Some(e.used_fallback),
                ..Default::default()
            };
            (e.value, flags, None, None, None)
        }
        AnySketch::L0(s) => {
            let e = s.estimate();
            let flags = BreakdownFlags {
                saturated: Some(e.saturated),
                ..Default::default()
            };
            (e.value, flags, None, Some(s.le_bytes()), Some(s.re_bytes()))
        }
        AnySketch::F0(s) => {
            let e = s.estimate();
            let flags = BreakdownFlags {
                breakdown: Some(e.breakdown),
                ..Default::default()
            };
            (e.value, flags, Some(branch_name(e.branch)), None, None)
        }
    };

    let exact = stats.as_ref().map(|stats| match args.algorithm {
        Algorithm::Lp => stats.lp(args.p.unwrap()),
        Algorithm::L0 => stats.l0() as f64,
        Algorithm::F0 => stats.f0() as f64,
    });
    let ps = reservoir.percentiles(&[0.5, 0.99]);

    let report = SketchReport {
        schema: 1,
        algorithm: algorithm_name(args.algorithm),
        params: sketch_params(args, &header),
        estimate,
        exact,
        relative_error: exact.map(|truth| relative_error(estimate, truth)),
        update_ns_p50: ps[0],
        update_ns_p99: ps[1],
        bytes_used: merged.state_bytes(),
        bytes_level_estimators: bytes_le,
        bytes_rough_estimator: bytes_re,
        branch,
        two_pass: None,
        breakdown_flags: flags,
    };
    print_json(&report)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sketch_two_pass(args: &SketchArgs) -> anyhow::Result<ExitCode> {
    let path = args.input.clone();
    let (header, first) = open_stream(&path, args.verify)
        .with_context(|| format!("reading {}", path.display()))?;
    drop(first);

    let mut config = L0Config::new(args.epsilon, header.n, header.m, header.magnitude);
    if args.analysis_constants {
        config = config.with_analysis_constants();
    }
    let verify = args.verify;
    let report = {
        let path = path.clone();
        two_pass_estimate(&config, args.seed, move || {
            open_stream(&path, verify).map(|(_, updates)| updates)
        })?
    };

    let exact = if args.exact {
        let (_, updates) = open_stream(&path, verify)?;
        Some(ExactStats::try_from_updates(updates)?.l0() as f64)
    } else {
        None
    };

    let out = SketchReport {
        schema: 1,
        algorithm: "l0",
        params: sketch_params(args, &header),
        estimate: report.value,
        exact,
        relative_error: exact.map(|truth| relative_error(report.value, truth)),
        update_ns_p50: None,
        update_ns_p99: None,
        bytes_used: report.state_bytes,
        bytes_level_estimators: None,
        bytes_rough_estimator: None,
        branch: None,
        two_pass: Some(TwoPassDetail {
            rough_estimate: report.rough_estimate,
            selected_level: report.selected_level,
            pass2_levels_per_copy: report.pass2_levels_per_copy,
            pass2_total_les: report.pass2_total_les,
        }),
        breakdown_flags: BreakdownFlags {
            saturated: Some(report.saturated),
            ..Default::default()
        },
    };
    print_json(&out)?;
    Ok(ExitCode::SUCCESS)
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Lp => "lp",
        Algorithm::L0 => "l0",
        Algorithm::F0 => "f0",
    }
}

fn sketch_params(args: &SketchArgs, header: &StreamHeader) -> SketchParams {
    SketchParams {
        epsilon: args.epsilon,
        p: args.p,
        seed: args.seed,
        passes: args.passes,
        analysis_constants: args.analysis_constants,
        shards: args.shards,
        n: header.n,
        m: header.m,
        magnitude: header.magnitude,
        model: header.model.to_string(),
    }
}

// ---------------------------------------------------------------------------
// bench subcommand
// ---------------------------------------------------------------------------

fn cmd_bench(args: &BenchArgs) -> anyhow::Result<ExitCode> {
    if !(0.0..=1.0).contains(&args.gate) {
        bail!("--gate must lie in [0, 1], got {}", args.gate);
    }
    let need_p = matches!(args.algorithm, BenchAlgorithm::Lp | BenchAlgorithm::ExactLp);
    if !need_p && args.p.is_some() {
        bail!("--p only applies to the p-norm estimators");
    }
    let estimator = match args.algorithm {
        BenchAlgorithm::Lp => {
            let p = args.p.context("--algorithm lp needs --p")?;
            if !(p.is_finite() && p > 0.0 && p < 2.0) {
                bail!("--p must lie strictly inside (0, 2), got {p}");
            }
            EstimatorSpec::Lp {
                p,
                eps: args.epsilon,
            }
        }
        BenchAlgorithm::L0 => EstimatorSpec::L0 { eps: args.epsilon },
        BenchAlgorithm::L0TwoPass => EstimatorSpec::L0TwoPass { eps: args.epsilon },
        BenchAlgorithm::F0 => EstimatorSpec::F0 { eps: args.epsilon },
        BenchAlgorithm::ExactLp => {
            let p = args.p.context("--algorithm exact-lp needs --p")?;
            if !(p.is_finite() && p > 0.0) {
                bail!("--p must be positive, got {p}");
            }
            EstimatorSpec::ExactLp { p }
        }
        BenchAlgorithm::ExactL0 => EstimatorSpec::ExactL0,
        BenchAlgorithm::ExactF0 => EstimatorSpec::ExactF0,
    };
    let spec = args.generator.to_spec()?;
    let mut report = run_trials(estimator, &spec, args.trials, args.epsilon, args.seed)?;
    if !args.timing {
        report.update_nanos_mean = None;
    }
    print_json(&report)?;
    let rate = report.successes as f64 / report.trials as f64;
    if rate < args.gate {
        eprintln!(
            "success rate {:.4} ({}/{}) below gate {:.4}",
            rate, report.successes, report.trials, args.gate
        );
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// generate subcommand
// ---------------------------------------------------------------------------

fn cmd_generate(args: &GenerateArgs) -> anyhow::Result<ExitCode> {
    let spec = args.generator.to_spec()?;
    let written = generate_file(&spec, &args.output, args.binary)
        .with_context(|| format!("writing {}", args.output.display()))?;
    let header = spec.header();
    let report = GenerateReport {
        schema: 1,
        path: args.output.display().to_string(),
        format: if args.binary { "binary" } else { "text" },
        updates: written,
        n: header.n,
        m: header.m,
        magnitude: header.magnitude,
        model: header.model.to_string(),
        stream_seed: spec.seed,
    };
    print_json(&report)?;
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value)?;
    let mut out = std::io::stdout().lock();
    // A closed pipe (e.g. piping into `head`) is not an error worth a trace.
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Sketch(args) => cmd_sketch(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Generate(args) => cmd_generate(args),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
