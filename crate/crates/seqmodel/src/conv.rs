//! Temporal convolution baseline.
//!
//! Tokens are embedded to `ch` channels, then passed through `n_layers`
//! width-5 'same' convolutions along time with GELU between layers. A
//! convolution is computed as a sum of five row-shifted matmuls
//! (`y[t] = sum_o x[t + o - 2] W_o + b`). Each sample's tokens carry two
//! zero rows of padding on each side so whole-matrix row shifts never mix
//! adjacent samples; the pad rows are re-zeroed after every layer (bias
//! and embedding would otherwise leak into them) by multiplying with a
//! keep mask. Future-token rows feed the shared zero-initialized head.

use autograd::{NodeId, Tape};

use crate::config::{CONV_KERNEL, TOKEN_DIM};
use crate::error::ModelError;
use crate::features::{padded_tokens, FeatureBatch, CONV_PAD};
use crate::bind::Bound;

/// y[r] = x[r + off], rows shifted with zero fill, via slice + concat.
fn shift_rows(tape: &mut Tape, x: NodeId, off: i64) -> Result<NodeId, ModelError> {
    let (rows, cols) = tape.dims(x);
    if off == 0 {
        return Ok(x);
    }
    let k = off.unsigned_abs() as usize;
    debug_assert!(k < rows);
    let zeros = vec![0.0f32; k * cols];
    let z = tape.input_rows(k, cols, &zeros);
    if off > 0 {
        let body = tape.slice_rows(x, k, rows - k)?;
        Ok(tape.concat_rows(body, z)?)
    } else {
        let body = tape.slice_rows(x, 0, rows - k)?;
        Ok(tape.concat_rows(z, body)?)
    }
}

/// Run the convolutional forward; returns the head output, `n*horizon x 6`,
/// rows sample-major (`row = b*horizon + t`).
pub fn forward_cnn(
    tape: &mut Tape,
    bound: &Bound,
    n_layers: usize,
    batch: &FeatureBatch,
    ch: usize,
) -> Result<NodeId, ModelError> {
    let n = batch.n;
    let t_hist = 2 * batch.s - 1;
    let t_total = t_hist + batch.h;
    let span = t_total + 2 * CONV_PAD;
    let rows = n * span;
    let (tokens, keep_rows) = padded_tokens(batch);
    let x = tape.input_rows(rows, TOKEN_DIM, &tokens);
    // Row keep-mask expanded to full width for elementwise multiply.
    let keep_w: Vec<f32> = keep_rows
        .iter()
        .flat_map(|&k| std::iter::repeat_n(k, ch))
        .collect();
    let keep = tape.input_rows(rows, ch, &keep_w);
    let e = tape.matmul(x, bound.id("embed.w"))?;
    let e = tape.add_tiled(e, bound.id("embed.b"))?;
    let mut cur = tape.mul(e, keep)?;
    let half = (CONV_KERNEL / 2) as i64;
    for l in 0..n_layers {
        let mut acc: Option<NodeId> = None;
        for o in 0..CONV_KERNEL {
            let shifted = shift_rows(tape, cur, o as i64 - half)?;
            let term = tape.matmul(shifted, bound.id(&format!("conv{l}.w{o}")))?;
            acc = Some(match acc {
                None => term,
                Some(a) => tape.add(a, term)?,
            });
        }
        let y = acc.expect("kernel width > 0");
        let y = tape.add_tiled(y, bound.id(&format!("conv{l}.b")))?;
        let y = tape.gelu(y);
        cur = tape.mul(y, keep)?;
    }
    // Gather each sample's future-token rows (sample-major output).
    let mut fut: Option<NodeId> = None;
    for b in 0..n {
        let part = tape.slice_rows(cur, b * span + CONV_PAD + t_hist, batch.h)?;
        fut = Some(match fut {
            None => part,
            Some(a) => tape.concat_rows(a, part)?,
        });
    }
    let fut = fut.expect("batch is non-empty");
    let y = tape.matmul(fut, bound.id("head.w"))?;
    Ok(tape.add_tiled(y, bound.id("head.b"))?)
}
