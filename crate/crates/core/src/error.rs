//! Crate-wide error type.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by sketch construction, updates, estimation, stream
/// parsing, and serialization.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A constructor argument violated its documented precondition.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A hash was evaluated on a point outside its declared domain.
    #[error("hash input {x} outside domain of size {domain}")]
    OutOfDomain { x: u64, domain: u64 },

    /// No prime was found in the requested interval after bounded retries.
    #[error("no prime found in [{lo}, {hi}] after {attempts} attempts")]
    NoPrimeInRange { lo: u64, hi: u64, attempts: u32 },

    /// An update would exceed the fixed-point counter budget.
    #[error("fixed-point overflow: {0}")]
    CounterOverflow(String),

    /// Sketches with different configurations or seeds cannot be merged.
    #[error("merge mismatch: {0}")]
    MergeMismatch(String),

    /// A lookup-table query fell outside the covered range.
    #[error("query out of table range: {0}")]
    OutOfTableRange(String),

    /// A stream file could not be parsed.
    #[error("stream parse error at line {line}: {msg}")]
    StreamParse { line: u64, msg: String },

    /// An update violated the declared stream model or header bounds.
    #[error("stream model violation at update {position}: {msg}")]
    ModelViolation { position: u64, msg: String },

    /// A generator specification cannot be satisfied.
    #[error("unsatisfiable generator spec: {0}")]
    UnsatisfiableSpec(String),

    /// Serialized bytes did not match the expected layout or version.
    #[error("deserialization error: {0}")]
    Deserialize(String),

    /// Wrapper for I/O failures while reading or writing streams.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
