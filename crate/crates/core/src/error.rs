use std::path::PathBuf;

/// Errors surfaced by loading, configuration, checkpointing and the CLI.
///
/// Bookkeeping failures inside the sampler (count underflow and the like)
/// are bugs rather than user errors and panic instead.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: line {line}: {what} {value} out of range 1..={max}")]
    Bounds {
        path: PathBuf,
        line: usize,
        what: &'static str,
        value: u64,
        max: u64,
    },

    #[error("invalid value: {0}")]
    Value(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stale candidate: node {0} is no longer in the tree")]
    StaleCandidate(u64),

    #[error("checkpoint version mismatch: file has {found}, this build reads {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("checkpoint corrupt: {0}")]
    CheckpointCorrupt(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config: {0}")]
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
