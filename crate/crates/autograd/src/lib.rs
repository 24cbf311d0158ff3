//! Minimal reverse-mode automatic differentiation for small sequence
//! models: rank-2 f32 tensors, a rebuildable tape with pooled buffers,
//! fused attention ops, and Adam.

pub mod adam;
pub mod error;
pub mod kernels;
pub mod tape;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use error::GradError;
pub use tape::{NodeId, Tape};
pub use tensor::Tensor;
