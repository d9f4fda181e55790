use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error; the display form carries the originating module as a
/// prefix (`ingest: ...`, `density: ...`) so diagnostics can be surfaced as-is.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("embed: {0}")]
    Embed(#[from] EmbedError),
    #[error("density: {0}")]
    Density(#[from] DensityError),
    #[error("reduction: {0}")]
    Reduction(#[from] ReductionError),
    #[error("stats: {0}")]
    Stats(#[from] StatsError),
    #[error("quality: {0}")]
    Quality(#[from] QualityError),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("line {line}: expected {expected} fields, found {found}")]
    Arity {
        line: u64,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: cannot parse {field} value {value:?}")]
    BadValue {
        line: u64,
        field: String,
        value: String,
    },
    #[error("sample {id}: non-finite coordinate")]
    NonFinite { id: u64 },
    #[error("sample {id}: expected {expected} coordinates, found {found}")]
    DimensionMismatch {
        id: u64,
        expected: usize,
        found: usize,
    },
    #[error("duplicate sample id {0}")]
    DuplicateId(u64),
    #[error("fewer than 2 classes")]
    FewerThanTwoClasses,
    #[error("embedding dimensionality must be at least 1")]
    ZeroDimensions,
    #[error("bad magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated stream: {0}")]
    Truncated(String),
    #[error("count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("duplicate row for class {0}")]
    DuplicateClass(u32),
    #[error("class {class}: value {value} outside [0, 1]")]
    OutOfRange { class: String, value: f64 },
    #[error("invalid trial summary: {0}")]
    BadTrialSummary(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("need at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("vector {index} has length {found}, expected {expected}")]
    RaggedInput {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("target dims {target} exceeds input dims {input}")]
    TargetTooLarge { target: usize, input: usize },
    #[error("target dims must be positive")]
    ZeroTarget,
    #[error("no variance")]
    NoVariance,
    #[error("non-finite input value in vector {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("degenerate class {0}: fewer than 2 samples")]
    DegenerateClass(u32),
    #[error("zero spread in some dimension of class {0}")]
    ZeroSpread(u32),
    #[error("class {0} has zero mean spread")]
    ZeroMeanSpread(u32),
    #[error("need at least 2 classes")]
    TooFewClasses,
    #[error("density for class {class} is not a positive finite number: {value}")]
    InvalidValue { class: u32, value: f64 },
}

#[derive(Debug, Error)]
pub enum ReductionError {
    #[error("target density must be positive, got {0}")]
    NonPositiveTarget(f64),
    #[error("margin fraction must lie in (0, 0.01], got {0}")]
    BadMargin(f64),
    #[error("max iterations must be positive")]
    ZeroIterations,
    #[error("method {0} is not supported for reduction (use mean or mean-normalized)")]
    UnsupportedMethod(String),
    #[error("unknown class {0}")]
    UnknownClass(u32),
    #[error("class {class}: cannot exclude {k} of {count} samples (at least 2 must remain)")]
    TooManyExcluded { class: u32, k: usize, count: usize },
    #[error("statistics do not match the embedding set")]
    StatsMismatch,
    #[error("excluded id {0} is not in the embedding set")]
    UnknownId(u64),
    #[error(transparent)]
    Density(#[from] DensityError),
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("undefined correlation: zero variance")]
    ZeroVariance,
    #[error("non-finite input")]
    NonFinite,
    #[error("need at least 2 trials per summary, got {0}")]
    TooFewTrials(u32),
    #[error("class-id mismatch between densities and accuracies")]
    ClassMismatch,
}

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("need at least 2 densities, got {0}")]
    TooFewClasses(usize),
    #[error("quality requires mean-normalized densities, got {0}")]
    WrongMethod(String),
    #[error("non-finite density")]
    NonFinite,
}

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("degenerate spec: {0}")]
    DegenerateSpec(String),
    #[error("train and test sets disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}
