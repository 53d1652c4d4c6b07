use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("bounding box is degenerate (all points coincide)")]
    DegenerateBbox,

    #[error("gradient norm {norm:.3e} below threshold {eps:.3e}; normal undefined")]
    DegenerateGradient { norm: f64, eps: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite input coordinate")]
    NonFiniteInput,

    #[error("field has no zero crossing inside the grid")]
    EmptySurface,

    #[error("mesh has zero total surface area")]
    ZeroArea,

    #[error("point too close to the medial axis (|grad| = {grad_norm:.4} deviates from 1)")]
    MedialAxis { grad_norm: f64 },

    #[error("training loss became non-finite at iteration {iter}: {detail}")]
    NonFiniteLoss { iter: usize, detail: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
