use thiserror::Error;

/// Errors produced by simulation, track synthesis, estimation, and the
/// dataset store.
#[derive(Debug, Error)]
pub enum SimError {
    /// A state or action field was NaN or infinite. Names the offending
    /// field so a failed rollout points at its source.
    #[error("non-finite value in field `{field}`")]
    NonFinite { field: &'static str },

    /// A vehicle parameter violated its physical bound.
    #[error("invalid parameter `{field}`: {reason}")]
    BadParam { field: &'static str, reason: String },

    /// A configuration value outside its documented range.
    #[error("invalid config: {0}")]
    BadConfig(String),

    /// A step inside a rollout failed; wraps the underlying error with the
    /// step index so long rollouts stay debuggable.
    #[error("rollout step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<SimError>,
    },

    /// Track synthesis could not satisfy the curvature bound even after
    /// retries with reduced perturbation.
    #[error("track synthesis failed: {0}")]
    TrackSynthesis(String),

    /// Windowing was asked for more history/horizon than the trajectory holds.
    #[error("trajectory too short: {len} states, need at least {need}")]
    TooShort { len: usize, need: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Dataset metadata failed to parse.
    #[error("dataset metadata: {0}")]
    Meta(#[from] serde_json::Error),

    /// Dataset written by an incompatible schema revision.
    #[error("dataset schema version {found}, this build reads {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    /// A binary payload file is shorter or longer than the metadata promises.
    #[error("dataset file `{file}` truncated or padded: expected {expected} bytes, found {found}")]
    Truncated {
        file: String,
        expected: usize,
        found: usize,
    },

    /// A binary payload file does not match its recorded checksum.
    #[error("dataset file `{file}` failed checksum verification")]
    ChecksumMismatch { file: String },
}

impl SimError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        SimError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_step(step: usize, source: SimError) -> Self {
        SimError::AtStep {
            step,
            source: Box::new(source),
        }
    }
}
