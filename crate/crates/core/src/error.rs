use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty signal")]
    EmptySignal,
    #[error("silent signal")]
    SilentSignal,
    #[error("unregistered mode: {0}")]
    UnregisteredMode(String),
    #[error("{name} = {value} is outside the legal range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated shard: {0}")]
    TruncatedShard(String),
    #[error("malformed shard: {0}")]
    MalformedShard(String),
    #[error("manifest: {0}")]
    Manifest(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },
    #[error("invalid label {label} for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("class count mismatch: model has {model}, data has {data}")]
    ClassCountMismatch { model: usize, data: usize },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Fmt(#[from] std::fmt::Error),
}

impl Error {
    pub fn out_of_range(name: &'static str, value: f64, lo: f64, hi: f64) -> Self {
        Error::OutOfRange {
            name,
            value,
            range: format!("[{lo}, {hi}]"),
        }
    }
}
