use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    // pixelgrid
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("PGM maxval {0} exceeds 255")]
    MaxvalTooLarge(u32),
    #[error("PGM payload truncated: expected {expected} samples, found {found}")]
    TruncatedPayload { expected: usize, found: usize },
    #[error("image {width}x{height} is smaller than 3x3")]
    ImageTooSmall { width: usize, height: usize },
    #[error("size mismatch: expected {expected} elements, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("pixel value {0} outside [0,255]")]
    PixelOutOfRange(u32),

    // gaussian
    #[error("sigma must be positive and finite, got {0}")]
    NonPositiveSigma(f64),
    #[error("invalid scale bank: {0}")]
    InvalidScaleBank(String),

    // patterns
    #[error("neighbor index {0} outside 1..=8")]
    IndexOutOfRange(usize),
    #[error("fractional change reference is zero (intensities must be shifted into [1,256])")]
    ZeroReference,
    #[error("adjacent set must have 2 or 4 members, got {0}")]
    BadAdjacentCount(usize),
    #[error("histogram of an empty pattern map")]
    EmptyMap,

    // metrics
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("weight vector has no positive entry")]
    AllZeroWeights,
    #[error("invalid weight {0}: weights must be finite and nonnegative")]
    NegativeWeight(f64),
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),

    // evolver
    #[error("distance tensor needs at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("category {0:?} has too few records for the requested protocol")]
    EmptyCategory(String),
    #[error("empty population")]
    EmptyPopulation,
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error("gene {0} outside [0,1]")]
    GeneOutOfRange(f64),

    // retrieval
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("record {0:?} has an empty category")]
    EmptyCategoryName(String),
    #[error("label {0:?} is empty or contains a tab or line break")]
    InvalidLabel(String),
    #[error("n = {n} outside 1..={max}")]
    NOutOfRange { n: usize, max: usize },
    #[error("empty database")]
    EmptyDatabase,
    #[error("bad magic line: {0:?}")]
    BadMagic(String),
    #[error("unsupported format version {0}")]
    VersionUnsupported(String),
    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    // datasets
    #[error("no decodable images under {0}")]
    EmptyCorpus(PathBuf),
    #[error("cannot decode {path}: {reason}")]
    UndecodableFile { path: PathBuf, reason: String },
    #[error("invalid corpus spec: {0}")]
    InvalidCorpus(String),
    #[error("I/O error on {path}: {reason}")]
    Io { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, err: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            reason: err.to_string(),
        }
    }
}
