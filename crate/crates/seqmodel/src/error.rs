use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parameter count {count} exceeds budget {budget}")]
    BudgetExceeded { count: usize, budget: usize },
    #[error("{what}: got {got}, want {want}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("operation `{op}` is not defined for architecture {arch}")]
    ArchMismatch { op: &'static str, arch: &'static str },
    #[error("dataset yields no {0} windows")]
    EmptyDataset(&'static str),
    #[error("fine-tuning dataset lacks estimated-state histories")]
    MissingEstimates,
    #[error("rehearsal ratio {0} > 0 but no rehearsal dataset was given")]
    MissingRehearsal(f64),
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error(transparent)]
    Grad(#[from] autograd::GradError),
    #[error(transparent)]
    Sim(#[from] simcar::SimError),
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint metadata error")]
    Meta(#[from] serde_json::Error),
    #[error("checkpoint schema version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint file {file} truncated: expected {expected} bytes, found {found}")]
    Truncated {
        file: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("checksum mismatch in checkpoint file {file}")]
    ChecksumMismatch { file: &'static str },
    #[error("checkpoint tensor `{name}`: expected shape {expected:?}, found {found:?}")]
    TensorMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
}

impl ModelError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.into(),
            source,
        }
    }
}
