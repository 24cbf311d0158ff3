//! Recurrent baselines: a single-layer LSTM or GRU over the token stream.
//!
//! The token sequence (interleaved history states/actions followed by the
//! future actions, 8 features per token) is laid out time-major so each
//! step's batch rows are one contiguous `slice_rows`. The input projection
//! for every step is fused into one matmul over the whole sequence; gates
//! are split with `slice_cols`. Hidden states at the future-action steps
//! are concatenated (still time-major) and mapped through the shared
//! zero-initialized head.

use autograd::{NodeId, Tape};

use crate::config::TOKEN_DIM;
use crate::error::ModelError;
use crate::features::{time_major_tokens, FeatureBatch};
use crate::bind::Bound;

/// LSTM step: gates packed `[i | f | g | o]` in the fused projections.
fn lstm_step(
    tape: &mut Tape,
    z: NodeId,
    c: NodeId,
    hid: usize,
) -> Result<(NodeId, NodeId), ModelError> {
    let i = tape.slice_cols(z, 0, hid)?;
    let i = tape.sigmoid(i);
    let f = tape.slice_cols(z, hid, hid)?;
    let f = tape.sigmoid(f);
    let g = tape.slice_cols(z, 2 * hid, hid)?;
    let g = tape.tanh(g);
    let o = tape.slice_cols(z, 3 * hid, hid)?;
    let o = tape.sigmoid(o);
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_new = tape.add(fc, ig)?;
    let tc = tape.tanh(c_new);
    let h_new = tape.mul(o, tc)?;
    Ok((h_new, c_new))
}

/// GRU step: gates packed `[z | r | n]`. The candidate uses `(r*h) U_n`,
/// so the `U_n` block is sliced out of the fused recurrent matrix.
fn gru_step(
    tape: &mut Tape,
    xt: NodeId,
    h: NodeId,
    u: NodeId,
    un: NodeId,
    hid: usize,
) -> Result<NodeId, ModelError> {
    let hu = tape.matmul(h, u)?;
    let xzr = tape.slice_cols(xt, 0, 2 * hid)?;
    let hzr = tape.slice_cols(hu, 0, 2 * hid)?;
    let zr = tape.add(xzr, hzr)?;
    let zg = tape.slice_cols(zr, 0, hid)?;
    let zg = tape.sigmoid(zg);
    let rg = tape.slice_cols(zr, hid, hid)?;
    let rg = tape.sigmoid(rg);
    let rh = tape.mul(rg, h)?;
    let rhu = tape.matmul(rh, un)?;
    let xn = tape.slice_cols(xt, 2 * hid, hid)?;
    let npre = tape.add(xn, rhu)?;
    let ng = tape.tanh(npre);
    // h' = (1-z)*n + z*h  ==  n + z*(h - n)
    let neg_n = tape.scale(ng, -1.0);
    let hmn = tape.add(h, neg_n)?;
    let zh = tape.mul(zg, hmn)?;
    Ok(tape.add(ng, zh)?)
}

/// Run the recurrent forward; returns the head output, `horizon*n x 6`,
/// rows time-major (`row = t*n + b`).
pub fn forward_rnn(
    tape: &mut Tape,
    bound: &Bound,
    batch: &FeatureBatch,
    hid: usize,
    lstm: bool,
) -> Result<NodeId, ModelError> {
    let n = batch.n;
    let t_hist = 2 * batch.s - 1;
    let t_total = t_hist + batch.h;
    let tokens = time_major_tokens(batch);
    let x = tape.input_rows(t_total * n, TOKEN_DIM, &tokens);
    let w = bound.id("cell.w");
    let u = bound.id("cell.u");
    let b = bound.id("cell.b");
    // One fused input projection for all steps; bias enters here once.
    let xp = tape.matmul(x, w)?;
    let xp = tape.add_tiled(xp, b)?;
    let zeros = vec![0.0f32; n * hid];
    let mut h = tape.input_rows(n, hid, &zeros);
    let mut c = tape.input_rows(n, hid, &zeros);
    let un = if lstm { u } else { tape.slice_cols(u, 2 * hid, hid)? };
    let mut future: Option<NodeId> = None;
    for t in 0..t_total {
        let xt = tape.slice_rows(xp, t * n, n)?;
        if lstm {
            let hu = tape.matmul(h, u)?;
            let z = tape.add(xt, hu)?;
            let (h2, c2) = lstm_step(tape, z, c, hid)?;
            h = h2;
            c = c2;
        } else {
            h = gru_step(tape, xt, h, u, un, hid)?;
        }
        if t >= t_hist {
            future = Some(match future {
                None => h,
                Some(acc) => tape.concat_rows(acc, h)?,
            });
        }
    }
    let future = future.expect("horizon >= 1 enforced by config validation");
    let y = tape.matmul(future, bound.id("head.w"))?;
    Ok(tape.add_tiled(y, bound.id("head.b"))?)
}
