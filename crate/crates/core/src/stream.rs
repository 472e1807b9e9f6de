//! Stream file formats and synthetic stream generators.
//!
//! A stream file holds a header — universe size `n`, declared length bound
//! `m`, magnitude bound `M`, and the stream model — followed by `(index,
//! value)` updates. Two on-disk formats share that logical layout:
//!
//! * **Text** (canonical): one whitespace-separated header line
//!   `n m M model`, then one `i v` line per update. Human-readable and
//!   diff-friendly.
//! * **Binary**: magic + version, the same header fields, a length prefix,
//!   then fixed-width little-endian records. Denser and faster for
//!   benchmarks.
//!
//! [`open_stream`] sniffs the leading bytes to pick the format. Reading is
//! streaming — O(1) memory per update — and every update is validated
//! against the header (`i < n`, `|v| ≤ M`, model rules, declared length);
//! violations carry the offending line or record position. Optional
//! strict-turnstile verification additionally replays frequencies to catch
//! negative dips, at the cost of a frequency map.
//!
//! [`GeneratorSpec`] produces synthetic streams with known ground truth:
//! uniform repeats over a fixed distinct-item set, Zipf-distributed
//! frequencies, insert/cancel pairs leaving an exact surviving support, and
//! low-support churn streams. Generation is iterator-based with O(target)
//! memory, so arbitrarily long streams can be written without buffering.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::seeds::{rng_from, split, tags};

/// Binary stream-file magic "NSTR" and format version.
/// Magic word opening the binary stream format (little-endian on disk).
pub const STREAM_MAGIC: u32 = 0x4E53_5452;
/// Version number of both stream file formats.
pub const STREAM_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Header and model
// ---------------------------------------------------------------------------

/// Which update sequences a stream declares itself to contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamModel {
    /// Arbitrary signed updates; frequencies may be negative.
    Turnstile,
    /// Signed updates that never drive any frequency negative.
    StrictTurnstile,
    /// Only `v = +1` updates.
    InsertionOnly,
}

impl StreamModel {
    /// Canonical spelling used by both file formats.
    pub fn as_str(&self) -> &'static str {
        match self {
            StreamModel::Turnstile => "turnstile",
            StreamModel::StrictTurnstile => "strict-turnstile",
            StreamModel::InsertionOnly => "insertion-only",
        }
    }

    /// Stable numeric tag for the binary format.
    fn code(&self) -> u8 {
        match self {
            StreamModel::Turnstile => 0,
            StreamModel::StrictTurnstile => 1,
            StreamModel::InsertionOnly => 2,
        }
    }

    fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(StreamModel::Turnstile),
            1 => Ok(StreamModel::StrictTurnstile),
            2 => Ok(StreamModel::InsertionOnly),
            other => Err(Error::Deserialize(format!("unknown model code {other}"))),
        }
    }
}

impl FromStr for StreamModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "turnstile" => Ok(StreamModel::Turnstile),
            "strict-turnstile" => Ok(StreamModel::StrictTurnstile),
            "insertion-only" => Ok(StreamModel::InsertionOnly),
            other => Err(Error::StreamParse {
                line: 1,
                msg: format!(
                    "unknown model {other:?} (expected turnstile, strict-turnstile, \
                     or insertion-only)"
                ),
            }),
        }
    }
}

impl std::fmt::Display for StreamModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Declared stream parameters: universe size `n`, length bound `m`,
/// per-update magnitude bound `M`, and the stream model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    /// Universe size — update indices lie in `[0, n)`.
    pub n: u64,
    /// Upper bound on the number of updates.
    pub m: u64,
    /// Per-update magnitude bound — values lie in `[−M, M]`.
    pub magnitude: u64,
    /// Declared update discipline.
    pub model: StreamModel,
}

impl StreamHeader {
    /// Bundles the fields; [`StreamHeader::validate`] checks them.
    pub fn new(n: u64, m: u64, magnitude: u64, model: StreamModel) -> Self {
        Self {
            n,
            m,
            magnitude,
            model,
        }
    }

    /// Checks `n, m, M ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == 0 || self.magnitude == 0 {
            return Err(Error::InvalidParam(format!(
                "stream header requires n, m, M ≥ 1, got n={} m={} M={}",
                self.n, self.m, self.magnitude
            )));
        }
        Ok(())
    }

    /// The canonical text header line (without newline): `n m M model`.
    pub fn to_text_line(&self) -> String {
        format!("{} {} {} {}", self.n, self.m, self.magnitude, self.model)
    }

    /// Parses a text header line.
    pub fn from_text_line(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::StreamParse {
                line: 1,
                msg: format!(
                    "header must be `n m M model` (4 fields), got {} fields",
                    fields.len()
                ),
            });
        }
        let parse_u64 = |s: &str, what: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::StreamParse {
                line: 1,
                msg: format!("{what} must be an unsigned integer, got {s:?}"),
            })
        };
        let header = StreamHeader {
            n: parse_u64(fields[0], "universe size")?,
            m: parse_u64(fields[1], "stream length bound")?,
            magnitude: parse_u64(fields[2], "magnitude bound")?,
            model: fields[3].parse()?,
        };
        header.validate()?;
        Ok(header)
    }
}

// ---------------------------------------------------------------------------
// Per-update validation
// ---------------------------------------------------------------------------

/// Validates successive updates against a header: index domain, magnitude
/// bound, model discipline, declared length, and (optionally, for the strict
/// model) that no frequency ever dips negative.
#[derive(Debug)]
struct UpdateChecker {
    header: StreamHeader,
    seen: u64,
    /// Running frequencies, kept only when strict verification is on.
    ledger: Option<HashMap<u64, i64>>,
}

impl UpdateChecker {
    fn new(header: StreamHeader, verify_strict: bool) -> Self {
        let ledger = (verify_strict && header.model == StreamModel::StrictTurnstile)
            .then(HashMap::new);
        Self {
            header,
            seen: 0,
            ledger,
        }
    }

    /// Checks one update; `seen` counts the updates accepted so far, so the
    /// reported position is 1-based.
    fn check(&mut self, i: u64, v: i64) -> Result<()> {
        let position = self.seen + 1;
        if position > self.header.m {
            return Err(Error::ModelViolation {
                position,
                msg: format!("stream exceeds its declared length bound m = {}", self.header.m),
            });
        }
        if i >= self.header.n {
            return Err(Error::ModelViolation {
                position,
                msg: format!("index {i} outside universe [0, {})", self.header.n),
            });
        }
        if v.unsigned_abs() > self.header.magnitude {
            return Err(Error::ModelViolation {
                position,
                msg: format!(
                    "value {v} outside magnitude bound [−{}, {}]",
                    self.header.magnitude, self.header.magnitude
                ),
            });
        }
        if self.header.model == StreamModel::InsertionOnly && v != 1 {
            return Err(Error::ModelViolation {
                position,
                msg: format!("insertion-only stream requires v = +1, got {v}"),
            });
        }
        if let Some(ledger) = self.ledger.as_mut() {
            let entry = ledger.entry(i).or_insert(0);
            *entry += v;
            if *entry < 0 {
                return Err(Error::ModelViolation {
                    position,
                    msg: format!("frequency of index {i} drops to {entry} (strict turnstile)"),
                });
            }
        }
        self.seen += 1;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Readers
// ---------------------------------------------------------------------------

/// Streaming text-format update iterator. Yields `(index, value)` pairs,
/// stopping permanently after the first error.
#[derive(Debug)]
pub struct TextUpdates<R: BufRead> {
    reader: R,
    checker: UpdateChecker,
    /// 1-based line number of the last line read (the header was line 1).
    line: u64,
    buf: String,
    failed: bool,
}

impl<R: BufRead> Iterator for TextUpdates<R> {
    type Item = Result<(u64, i64)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            self.buf.clear();
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e.into()));
                }
            }
            self.line += 1;
            let trimmed = self.buf.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parsed = parse_update_line(trimmed, self.line);
            let (i, v) = match parsed {
                Ok(pair) => pair,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            };
            if let Err(e) = self.checker.check(i, v) {
                self.failed = true;
                return Some(Err(e));
            }
            return Some(Ok((i, v)));
        }
    }
}

/// Parses one `i v` update line.
fn parse_update_line(line: &str, line_no: u64) -> Result<(u64, i64)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 2 {
        return Err(Error::StreamParse {
            line: line_no,
            msg: format!("update must be `i v` (2 fields), got {} fields", fields.len()),
        });
    }
    let i = fields[0].parse().map_err(|_| Error::StreamParse {
        line: line_no,
        msg: format!("index must be an unsigned integer, got {:?}", fields[0]),
    })?;
    let v = fields[1].parse().map_err(|_| Error::StreamParse {
        line: line_no,
        msg: format!("value must be a signed integer, got {:?}", fields[1]),
    })?;
    Ok((i, v))
}

/// Reads a text stream from any buffered reader: header line first, then a
/// validated update iterator. `verify_strict` enables the frequency replay
/// for strict-turnstile streams (costs a frequency map).
pub fn read_text<R: BufRead>(mut reader: R, verify_strict: bool) -> Result<(StreamHeader, TextUpdates<R>)> {
    let mut first = String::new();
    if reader.read_line(&mut first)? == 0 {
        return Err(Error::StreamParse {
            line: 1,
            msg: "empty file (missing header)".into(),
        });
    }
    let header = StreamHeader::from_text_line(first.trim())?;
    Ok((
        header,
        TextUpdates {
            reader,
            checker: UpdateChecker::new(header, verify_strict),
            line: 1,
            buf: String::new(),
            failed: false,
        },
    ))
}

/// Streaming binary-format update iterator.
#[derive(Debug)]
pub struct BinaryUpdates<R: Read> {
    reader: R,
    checker: UpdateChecker,
    remaining: u64,
    failed: bool,
}

impl<R: Read> BinaryUpdates<R> {
    fn read_exact_at(&mut self, buf: &mut [u8]) -> Result<()> {
        self.reader.read_exact(buf).map_err(|e| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Error::StreamParse {
                    line: self.checker.seen + 1,
                    msg: "unexpected end of file inside update record".into(),
                }
            } else {
                e.into()
            }
        })
    }
}

impl<R: Read> Iterator for BinaryUpdates<R> {
    type Item = Result<(u64, i64)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.remaining == 0 {
            // The length prefix is authoritative; trailing bytes are corruption.
            let mut probe = [0u8; 1];
            return match self.reader.read(&mut probe) {
                Ok(0) => None,
                Ok(_) => {
                    self.failed = true;
                    Some(Err(Error::Deserialize(
                        "trailing bytes after the declared update count".into(),
                    )))
                }
                Err(e) => {
                    self.failed = true;
                    Some(Err(e.into()))
                }
            };
        }
        let mut rec = [0u8; 16];
        if let Err(e) = self.read_exact_at(&mut rec) {
            self.failed = true;
            return Some(Err(e));
        }
        self.remaining -= 1;
        let i = u64::from_le_bytes(rec[..8].try_into().expect("8 bytes"));
        let v = i64::from_le_bytes(rec[8..].try_into().expect("8 bytes"));
        if let Err(e) = self.checker.check(i, v) {
            self.failed = true;
            return Some(Err(e));
        }
        Some(Ok((i, v)))
    }
}

/// Reads a binary stream from any reader: header first, then a validated
/// update iterator.
pub fn read_binary<R: Read>(mut reader: R, verify_strict: bool) -> Result<(StreamHeader, BinaryUpdates<R>)> {
    let mut word = [0u8; 4];
    reader.read_exact(&mut word)?;
    if u32::from_le_bytes(word) != STREAM_MAGIC {
        return Err(Error::Deserialize("bad stream-file magic".into()));
    }
    reader.read_exact(&mut word)?;
    if u32::from_le_bytes(word) != STREAM_VERSION {
        return Err(Error::Deserialize("unsupported stream-file version".into()));
    }
    let mut long = [0u8; 8];
    let mut next_u64 = |r: &mut R| -> Result<u64> {
        r.read_exact(&mut long)?;
        Ok(u64::from_le_bytes(long))
    };
    let n = next_u64(&mut reader)?;
    let m = next_u64(&mut reader)?;
    let magnitude = next_u64(&mut reader)?;
    let mut code = [0u8; 1];
    reader.read_exact(&mut code)?;
    let model = StreamModel::from_code(code[0])?;
    let header = StreamHeader {
        n,
        m,
        magnitude,
        model,
    };
    header.validate()?;
    let mut long = [0u8; 8];
    reader.read_exact(&mut long)?;
    let count = u64::from_le_bytes(long);
    Ok((
        header,
        BinaryUpdates {
            reader,
            checker: UpdateChecker::new(header, verify_strict),
            remaining: count,
            failed: false,
        },
    ))
}

/// A stream file in either on-disk format.
#[derive(Debug)]
pub enum StreamFile {
    /// Canonical text format.
    Text(TextUpdates<BufReader<File>>),
    /// Length-prefixed binary format.
    Binary(BinaryUpdates<BufReader<File>>),
}

impl Iterator for StreamFile {
    type Item = Result<(u64, i64)>;

    fn next(&mut self) -> Option<Self::Item> {
        match self {
            StreamFile::Text(t) => t.next(),
            StreamFile::Binary(b) => b.next(),
        }
    }
}

/// Opens a stream file, sniffing the leading bytes to pick the format, and
/// returns the header plus a validated streaming update iterator.
pub fn open_stream(path: &Path, verify_strict: bool) -> Result<(StreamHeader, StreamFile)> {
    let mut reader = BufReader::new(File::open(path)?);
    let looks_binary = {
        let head = reader.fill_buf()?;
        head.len() >= 4 && head[..4] == STREAM_MAGIC.to_le_bytes()
    };
    if looks_binary {
        let (header, updates) = read_binary(reader, verify_strict)?;
        Ok((header, StreamFile::Binary(updates)))
    } else {
        let (header, updates) = read_text(reader, verify_strict)?;
        Ok((header, StreamFile::Text(updates)))
    }
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

/// Writes a text stream; every update is validated against the header.
/// Returns the number of updates written.
pub fn write_text<W: Write>(
    w: &mut W,
    header: &StreamHeader,
    updates: impl IntoIterator<Item = (u64, i64)>,
) -> Result<u64> {
    header.validate()?;
    writeln!(w, "{}", header.to_text_line())?;
    let mut checker = UpdateChecker::new(*header, false);
    for (i, v) in updates {
        checker.check(i, v)?;
        writeln!(w, "{i} {v}")?;
    }
    Ok(checker.seen)
}

/// Writes a binary stream with the declared update count; errors if the
/// iterator yields a different number of updates than `count`.
pub fn write_binary<W: Write>(
    w: &mut W,
    header: &StreamHeader,
    count: u64,
    updates: impl IntoIterator<Item = (u64, i64)>,
) -> Result<u64> {
    header.validate()?;
    w.write_all(&STREAM_MAGIC.to_le_bytes())?;
    w.write_all(&STREAM_VERSION.to_le_bytes())?;
    w.write_all(&header.n.to_le_bytes())?;
    w.write_all(&header.m.to_le_bytes())?;
    w.write_all(&header.magnitude.to_le_bytes())?;
    w.write_all(&[header.model.code()])?;
    w.write_all(&count.to_le_bytes())?;
    let mut checker = UpdateChecker::new(*header, false);
    for (i, v) in updates {
        checker.check(i, v)?;
        if checker.seen > count {
            return Err(Error::InvalidParam(format!(
                "update iterator yielded more than the declared {count} updates"
            )));
        }
        w.write_all(&i.to_le_bytes())?;
        w.write_all(&v.to_le_bytes())?;
    }
    if checker.seen != count {
        return Err(Error::InvalidParam(format!(
            "update iterator yielded {} updates but {count} were declared",
            checker.seen
        )));
    }
    Ok(checker.seen)
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// Shape of a synthetic stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeneratorKind {
    /// `target` distinct items, each inserted at least once, remaining
    /// insertions uniform over them. Insertion-only; exact `F₀ = target`.
    Uniform,
    /// `target` distinct items with Zipf(`s`)-shaped frequencies: the item of
    /// rank `r` receives a share ∝ `(r+1)^{−s}`, every item at least one
    /// insertion, frequencies nonincreasing in rank. Insertion-only.
    Zipf {
        /// Zipf exponent; must be positive and finite.
        s: f64,
    },
    /// Inserts `target` distinct items once each, then deletes the given
    /// fraction of them (rounded), so exactly the uncancelled items survive.
    /// Strict turnstile; exact `L₀ = target − round(fraction·target)`.
    Cancel {
        /// Fraction of the inserted items to cancel, in `[0, 1]`.
        fraction: f64,
    },
    /// Inserts `target` distinct items, then fills the remaining length with
    /// insert/delete churn pairs, so the live support never exceeds
    /// `target + 1` and ends exactly at `target`. Strict turnstile.
    PromiseSmallL0,
}

/// A complete synthetic-stream specification; deterministic given `seed`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    /// Stream shape.
    pub kind: GeneratorKind,
    /// Universe size `n` (indices are drawn from `[0, n)`).
    pub universe: u64,
    /// Target distinct-item count (`F₀` for insertion-only kinds, the
    /// pre-cancellation support for the turnstile kinds).
    pub target: u64,
    /// Requested update count; `0` means "the minimum the kind allows". The
    /// cancel kind derives its length from `target` and `fraction` and
    /// rejects any other nonzero value.
    pub length: u64,
    /// Seed for item selection and insertion order.
    pub seed: u64,
}

impl GeneratorSpec {
    /// Number of items the cancel kind deletes again.
    fn cancelled(&self) -> u64 {
        match self.kind {
            GeneratorKind::Cancel { fraction } => {
                (fraction * self.target as f64).round() as u64
            }
            _ => 0,
        }
    }

    /// Checks the spec and the compatibility of `length` with the kind.
    pub fn validate(&self) -> Result<()> {
        if self.universe == 0 {
            return Err(Error::UnsatisfiableSpec("universe must be ≥ 1".into()));
        }
        if self.target == 0 {
            return Err(Error::UnsatisfiableSpec("target must be ≥ 1".into()));
        }
        if self.target > self.universe {
            return Err(Error::UnsatisfiableSpec(format!(
                "target {} exceeds universe {}",
                self.target, self.universe
            )));
        }
        match self.kind {
            GeneratorKind::Uniform => {
                if self.length != 0 && self.length < self.target {
                    return Err(Error::UnsatisfiableSpec(format!(
                        "length {} cannot cover {} distinct items",
                        self.length, self.target
                    )));
                }
            }
            GeneratorKind::Zipf { s } => {
                if !(s.is_finite() && s > 0.0) {
                    return Err(Error::UnsatisfiableSpec(format!(
                        "zipf exponent must be positive and finite, got {s}"
                    )));
                }
                if self.length != 0 && self.length < self.target {
                    return Err(Error::UnsatisfiableSpec(format!(
                        "length {} cannot cover {} distinct items",
                        self.length, self.target
                    )));
                }
            }
            GeneratorKind::Cancel { fraction } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::UnsatisfiableSpec(format!(
                        "cancel fraction must lie in [0, 1], got {fraction}"
                    )));
                }
                let derived = self.target + self.cancelled();
                if self.length != 0 && self.length != derived {
                    return Err(Error::UnsatisfiableSpec(format!(
                        "cancel streams have a derived length of {derived} \
                         (target + cancelled); got {}",
                        self.length
                    )));
                }
            }
            GeneratorKind::PromiseSmallL0 => {
                if self.length != 0 {
                    if self.length < self.target {
                        return Err(Error::UnsatisfiableSpec(format!(
                            "length {} cannot cover {} distinct items",
                            self.length, self.target
                        )));
                    }
                    if (self.length - self.target) % 2 != 0 {
                        return Err(Error::UnsatisfiableSpec(
                            "churn updates come in insert/delete pairs; \
                             length − target must be even"
                                .into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// The exact number of updates the generator will emit.
    pub fn stream_length(&self) -> u64 {
        match self.kind {
            GeneratorKind::Uniform | GeneratorKind::Zipf { .. } => self.length.max(self.target),
            GeneratorKind::Cancel { .. } => self.target + self.cancelled(),
            GeneratorKind::PromiseSmallL0 => self.length.max(self.target),
        }
    }

    /// The header describing the generated stream.
    pub fn header(&self) -> StreamHeader {
        let model = match self.kind {
            GeneratorKind::Uniform | GeneratorKind::Zipf { .. } => StreamModel::InsertionOnly,
            GeneratorKind::Cancel { .. } | GeneratorKind::PromiseSmallL0 => {
                StreamModel::StrictTurnstile
            }
        };
        StreamHeader::new(self.universe, self.stream_length(), 1, model)
    }

    /// Builds the update iterator; O(target) memory regardless of length.
    pub fn iter(&self) -> Result<GeneratorIter> {
        self.validate()?;
        let mut rng = rng_from(split(self.seed, tags::GENERATOR, 0));
        let items = sample_distinct(self.universe, self.target, &mut rng);
        let total = self.stream_length();
        let inner = match self.kind {
            GeneratorKind::Uniform => GenInner::Uniform {
                items,
                emitted: 0,
                total,
                rng,
            },
            GeneratorKind::Zipf { s } => {
                let remaining = zipf_counts(self.target, total, s);
                GenInner::Zipf {
                    items,
                    remaining,
                    cursor: 0,
                    nonzero_prefix: self.target as usize,
                }
            }
            GeneratorKind::Cancel { .. } => GenInner::Cancel {
                items,
                cancelled: self.cancelled(),
                pos: 0,
            },
            GeneratorKind::PromiseSmallL0 => GenInner::Promise {
                items,
                pos: 0,
                total,
                universe: self.universe,
                pending_delete: None,
                rng,
            },
        };
        Ok(GeneratorIter { inner })
    }
}

/// Uniform sample of `count` distinct indices from `[0, universe)` via
/// partial Fisher–Yates over a sparse swap map; O(count) memory.
fn sample_distinct(universe: u64, count: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let mut swaps: HashMap<u64, u64> = HashMap::new();
    let mut out = Vec::with_capacity(count as usize);
    for t in 0..count {
        let r = rng.gen_range(t..universe);
        let chosen = *swaps.get(&r).unwrap_or(&r);
        let displaced = *swaps.get(&t).unwrap_or(&t);
        swaps.insert(r, displaced);
        out.push(chosen);
    }
    out
}

/// Zipf(`s`) frequency allocation: one guaranteed insertion per rank, the
/// remaining `total − target` insertions split ∝ `(r+1)^{−s}` with floors,
/// the leftover distributed to the lowest ranks. The result sums to `total`
/// and is nonincreasing in rank.
fn zipf_counts(target: u64, total: u64, s: f64) -> Vec<u64> {
    let ranks = target as usize;
    let weights: Vec<f64> = (0..ranks).map(|r| ((r + 1) as f64).powf(-s)).collect();
    let weight_sum: f64 = weights.iter().sum();
    let extra = total - target;
    let mut counts: Vec<u64> = weights
        .iter()
        .map(|w| (extra as f64 * w / weight_sum).floor() as u64)
        .collect();
    let assigned: u64 = counts.iter().sum();
    let leftover = extra - assigned;
    for c in counts.iter_mut().take(leftover as usize) {
        *c += 1;
    }
    for c in counts.iter_mut() {
        *c += 1;
    }
    debug_assert_eq!(counts.iter().sum::<u64>(), total);
    debug_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    counts
}

/// Streaming update source built by [`GeneratorSpec::iter`].
#[derive(Debug)]
pub struct GeneratorIter {
    inner: GenInner,
}

#[derive(Debug)]
enum GenInner {
    Uniform {
        items: Vec<u64>,
        emitted: u64,
        total: u64,
        rng: ChaCha8Rng,
    },
    Zipf {
        items: Vec<u64>,
        remaining: Vec<u64>,
        cursor: usize,
        /// Counts are nonincreasing by rank, so the ranks still owed
        /// insertions always form a prefix; this is its length.
        nonzero_prefix: usize,
    },
    Cancel {
        items: Vec<u64>,
        cancelled: u64,
        pos: u64,
    },
    Promise {
        items: Vec<u64>,
        pos: u64,
        total: u64,
        universe: u64,
        pending_delete: Option<u64>,
        rng: ChaCha8Rng,
    },
}

impl Iterator for GeneratorIter {
    type Item = (u64, i64);

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            GenInner::Uniform {
                items,
                emitted,
                total,
                rng,
            } => {
                if *emitted >= *total {
                    return None;
                }
                let i = if (*emitted as usize) < items.len() {
                    items[*emitted as usize]
                } else {
                    items[rng.gen_range(0..items.len())]
                };
                *emitted += 1;
                Some((i, 1))
            }
            GenInner::Zipf {
                items,
                remaining,
                cursor,
                nonzero_prefix,
            } => {
                if *nonzero_prefix == 0 {
                    return None;
                }
                if *cursor >= *nonzero_prefix {
                    *cursor = 0;
                }
                let r = *cursor;
                remaining[r] -= 1;
                // Counts are nonincreasing, so ranks empty from the back.
                while *nonzero_prefix > 0 && remaining[*nonzero_prefix - 1] == 0 {
                    *nonzero_prefix -= 1;
                }
                *cursor += 1;
                Some((items[r], 1))
            }
            GenInner::Cancel {
                items,
                cancelled,
                pos,
            } => {
                let inserts = items.len() as u64;
                if *pos < inserts {
                    let i = items[*pos as usize];
                    *pos += 1;
                    Some((i, 1))
                } else if *pos < inserts + *cancelled {
                    let i = items[(*pos - inserts) as usize];
                    *pos += 1;
                    Some((i, -1))
                } else {
                    None
                }
            }
            GenInner::Promise {
                items,
                pos,
                total,
                universe,
                pending_delete,
                rng,
            } => {
                if *pos >= *total {
                    return None;
                }
                *pos += 1;
                if (*pos as usize) <= items.len() {
                    return Some((items[*pos as usize - 1], 1));
                }
                if let Some(i) = pending_delete.take() {
                    return Some((i, -1));
                }
                let i = rng.gen_range(0..*universe);
                *pending_delete = Some(i);
                Some((i, 1))
            }
        }
    }
}

/// Generates a stream file (text or binary) from a spec; returns the number
/// of updates written.
pub fn generate_file(spec: &GeneratorSpec, path: &Path, binary: bool) -> Result<u64> {
    spec.validate()?;
    let header = spec.header();
    let mut w = BufWriter::new(File::create(path)?);
    let written = if binary {
        write_binary(&mut w, &header, spec.stream_length(), spec.iter()?)?
    } else {
        write_text(&mut w, &header, spec.iter()?)?
    };
    w.flush()?;
    Ok(written)
}
