use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::lookup::LookupError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Text that did not match the expected format, carrying the offending input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed {what}: {input:?}")]
pub struct ParseError {
    pub what: &'static str,
    pub input: String,
}

impl ParseError {
    pub fn new(what: &'static str, input: impl Into<String>) -> ParseError {
        ParseError { what, input: input.into() }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("record rejected: {0}")]
    Rejected(String),

    #[error("corrupt segment {}: {reason}", path.display())]
    CorruptSegment { path: PathBuf, reason: String },

    #[error("partition {0} does not exist")]
    NoSuchPartition(String),

    #[error("partitions not indexed: {}", .0.join(", "))]
    NotIndexed(Vec<String>),

    #[error("corrupt index {}: {reason}", path.display())]
    CorruptIndex { path: PathBuf, reason: String },

    #[error(transparent)]
    Lookup(#[from] LookupError),

    #[error("fetch aborted after {attempts} failed attempts on batch {batch}: {last}")]
    FetchAborted { batch: u64, attempts: u32, last: String },

    #[error("{0}")]
    Stage(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Error {
        Error::InvalidArgument(msg.into())
    }
}
