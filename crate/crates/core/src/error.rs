use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed PGM: {0}")]
    Pgm(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("scene has {blobs} blobs but {labels} labels were supplied")]
    LabelMismatch { blobs: usize, labels: usize },

    #[error("malformed manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("unsupported database schema version {0}")]
    SchemaVersion(u64),

    #[error("database is corrupt: {0}")]
    Corrupt(String),

    #[error("database fingerprint {found} does not match configuration fingerprint {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("feature dimension mismatch: index holds {expected}-d vectors, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("feature vector has a non-finite component")]
    NonFinite,

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
