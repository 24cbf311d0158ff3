use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("shape mismatch: left {left:?} vs right {right:?} in {op}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not match buffer of {len} elements")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("backward requires a scalar loss, got shape [{rows}, {cols}]")]
    NonScalarLoss { rows: usize, cols: usize },
    #[error("non-finite gradient for parameter `{name}`")]
    NonFiniteGradient { name: String },
    #[error("invalid hyperparameter: {0}")]
    BadHyper(String),
}
