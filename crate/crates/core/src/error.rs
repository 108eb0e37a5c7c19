use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the embedding, aggregation and retrieval stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not symmetric (max deviation {max_deviation:e})")]
    NotSymmetric { max_deviation: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficients violate 1^T gamma = 1 (sum = {sum})")]
    Infeasible { sum: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("all input vectors are zero; democratic condition cannot be satisfied")]
    DegenerateInput,

    #[error("requested {requested} components but data has rank {rank}")]
    RankDeficient { requested: usize, rank: usize },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("unsupported version {major}.{minor}")]
    UnsupportedVersion { major: u16, minor: u16 },

    #[error("missing section `{0}`")]
    MissingSection(String),

    #[error("missing ground truth for query `{0}`")]
    MissingGroundTruth(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
