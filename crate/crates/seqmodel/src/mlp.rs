//! Flat MLP baseline: the whole window (history states, history actions,
//! future actions) is one feature vector per sample; two GELU hidden
//! layers; the zero-initialized head emits all `horizon * 6` outputs at
//! once. The `n x horizon*6` output buffer is row-major, so it is exactly
//! the `n*horizon x 6` sample-major prediction matrix.

use autograd::{NodeId, Tape};

use crate::error::ModelError;
use crate::features::{flat_inputs, FeatureBatch};
use crate::bind::Bound;

pub fn forward_mlp(
    tape: &mut Tape,
    bound: &Bound,
    batch: &FeatureBatch,
    in_dim: usize,
) -> Result<NodeId, ModelError> {
    let x = flat_inputs(batch);
    debug_assert_eq!(x.len(), batch.n * in_dim);
    let x = tape.input_rows(batch.n, in_dim, &x);
    let h1 = tape.matmul(x, bound.id("fc1.w"))?;
    let h1 = tape.add_tiled(h1, bound.id("fc1.b"))?;
    let h1 = tape.gelu(h1);
    let h2 = tape.matmul(h1, bound.id("fc2.w"))?;
    let h2 = tape.add_tiled(h2, bound.id("fc2.b"))?;
    let h2 = tape.gelu(h2);
    let y = tape.matmul(h2, bound.id("head.w"))?;
    Ok(tape.add_tiled(y, bound.id("head.b"))?)
}
