use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("measure has a continuous part; atomic distance needs purely atomic measures")]
    NotAtomic,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("horizon must be at least 1")]
    InvalidHorizon,

    #[error("deterministic environment excluded: only one value {0} observed")]
    DeterministicEnvironment(f64),

    #[error("support drift: value {value} at index {index} is not in the declared atomic support")]
    SupportDrift { index: usize, value: f64 },

    #[error("root label mismatch: window value at site 0 is {found}, tree root is labeled {expected}")]
    RootMismatch { expected: f64, found: f64 },

    #[error("site {0} is not covered by the environment path")]
    RangeNotCovered(i64),

    #[error("anchors {a} and {b} never linked")]
    AnchorsNeverLinked { a: f64, b: f64 },

    #[error("inconsistent blocks: {0}")]
    InconsistentBlocks(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("corrupt observation file: {0}")]
    CorruptFile(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
