use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: u64, found: u64 },
    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("negative label on line {line}")]
    NegativeLabel { line: usize },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("requested dimension {requested} exceeds limit {limit}")]
    DimTooLarge { requested: usize, limit: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("beta must be positive, got {0}")]
    NonPositiveBeta(f64),
    #[error("k_nn must lie in [1, {num_words}], got {k}")]
    BadK { k: usize, num_words: usize },
    #[error("singular linear system")]
    SingularSystem,
    #[error("empty input")]
    EmptyInput,
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("cached artifact disagrees with configuration: {0}")]
    CacheMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
