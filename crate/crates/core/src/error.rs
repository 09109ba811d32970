use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid network architecture: {0}")]
    Architecture(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("normal frame is not orthonormal (Gram deviation {deviation:e})")]
    NonOrthonormalFrame { deviation: f64 },

    #[error("level set of {0} is empty in the sampled box")]
    EmptyLevelSet(String),

    #[error("invalid density: {0}")]
    Density(String),

    #[error("invalid problem: {0}")]
    Problem(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid oracle input: {0}")]
    Oracle(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("velocity field is unbounded ({0:e}); finite-volume integration aborted")]
    UnboundedVelocity(f64),

    #[error("malformed {kind} file: {msg}")]
    Format { kind: &'static str, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(kind: &'static str, msg: impl Into<String>) -> Self {
        Error::Format { kind, msg: msg.into() }
    }
}
