//! Transformer decoder forward pass.
//!
//! History states and actions are encoded by two affine maps, interleaved
//! x,a,x,a,...,x into a context of 2S-1 tokens, and summed with a learned
//! positional table. Future-action query tokens pass through `n_layers`
//! pre-norm decoder blocks: causal self-attention over the queries,
//! cross-attention onto the context (optionally masked), and a GELU
//! feed-forward. The context itself is not self-attended, so a masked
//! context token is provably invisible to the output. A final layer norm
//! and the zero-initialized head produce normalized target deltas.

use autograd::{NodeId, Tape};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::norm::{ACT_DIM, STATE_DIM};
use crate::bind::Bound;

fn dense(tape: &mut Tape, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, ModelError> {
    let y = tape.matmul(x, w)?;
    Ok(tape.add_tiled(y, b)?)
}

fn ln(tape: &mut Tape, x: NodeId, bound: &Bound, prefix: &str) -> Result<NodeId, ModelError> {
    Ok(tape.layernorm(
        x,
        bound.id(&format!("{prefix}.g")),
        bound.id(&format!("{prefix}.b")),
    )?)
}

/// Inverted dropout via an elementwise 0 / (1/keep) mask; identity when off.
fn maybe_dropout(
    tape: &mut Tape,
    x: NodeId,
    drop: &mut Option<(&mut ChaCha8Rng, f64)>,
) -> Result<NodeId, ModelError> {
    let Some((rng, p)) = drop else {
        return Ok(x);
    };
    let p = *p;
    if p <= 0.0 {
        return Ok(x);
    }
    let (r, c) = tape.dims(x);
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f32> = (0..r * c)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep as f32 })
        .collect();
    let m = tape.input_rows(r, c, &mask);
    Ok(tape.mul(x, m)?)
}

/// Encode and interleave a history into context tokens.
/// `ctx_states`: `groups*s x 6`, `ctx_actions`: `groups*(s-1) x 2`.
pub fn encode_context(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    ctx_states: &[f32],
    ctx_actions: &[f32],
    groups: usize,
    s: usize,
) -> Result<NodeId, ModelError> {
    if s == 0 || s > cfg.hist_states() {
        return Err(ModelError::LengthMismatch {
            what: "history states per sample",
            got: s,
            want: cfg.hist_states(),
        });
    }
    if ctx_states.len() != groups * s * STATE_DIM {
        return Err(ModelError::LengthMismatch {
            what: "context state features",
            got: ctx_states.len(),
            want: groups * s * STATE_DIM,
        });
    }
    if ctx_actions.len() != groups * (s - 1) * ACT_DIM {
        return Err(ModelError::LengthMismatch {
            what: "context action features",
            got: ctx_actions.len(),
            want: groups * (s - 1) * ACT_DIM,
        });
    }
    let xs = tape.input_rows(groups * s, STATE_DIM, ctx_states);
    let xs = dense(tape, xs, bound.id("enc_state.w"), bound.id("enc_state.b"))?;
    let ctx = if s == 1 {
        xs
    } else {
        let xa = tape.input_rows(groups * (s - 1), ACT_DIM, ctx_actions);
        let xa = dense(tape, xa, bound.id("enc_act.w"), bound.id("enc_act.b"))?;
        tape.interleave_rows(xs, xa, groups)?
    };
    let ctx_rows = 2 * s - 1;
    let pos = bound.id("pos_ctx");
    let pos = if ctx_rows == cfg.ctx_len() {
        pos
    } else {
        tape.slice_rows(pos, 0, ctx_rows)?
    };
    Ok(tape.add_tiled(ctx, pos)?)
}

/// Run the decoder stack over `n` query sequences of length `cfg.horizon`.
/// `ctx` holds 1 group when `shared`, else `n` groups; `mask` (if any) is
/// `groups * ctx_len` visibility flags.
#[allow(clippy::too_many_arguments)]
pub fn decode(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &ModelConfig,
    ctx: NodeId,
    query_actions: &[f32],
    n: usize,
    shared: bool,
    mask: Option<&[bool]>,
    mut drop: Option<(&mut ChaCha8Rng, f64)>,
) -> Result<NodeId, ModelError> {
    let h = cfg.horizon;
    if query_actions.len() != n * h * ACT_DIM {
        return Err(ModelError::LengthMismatch {
            what: "query action features",
            got: query_actions.len(),
            want: n * h * ACT_DIM,
        });
    }
    let q = tape.input_rows(n * h, ACT_DIM, query_actions);
    let q = dense(tape, q, bound.id("enc_act.w"), bound.id("enc_act.b"))?;
    let mut x = tape.add_tiled(q, bound.id("pos_query"))?;
    for l in 0..cfg.n_layers {
        let p = |nm: &str| format!("blk{l}.{nm}");
        // Causal self-attention over the query tokens.
        let t = ln(tape, x, bound, &p("ln1"))?;
        let sq = dense(tape, t, bound.id(&p("sa.wq")), bound.id(&p("sa.bq")))?;
        let sk = dense(tape, t, bound.id(&p("sa.wk")), bound.id(&p("sa.bk")))?;
        let sv = dense(tape, t, bound.id(&p("sa.wv")), bound.id(&p("sa.bv")))?;
        let sa = tape.self_attn_causal(sq, sk, sv, n, cfg.n_heads)?;
        let sa = dense(tape, sa, bound.id(&p("sa.wo")), bound.id(&p("sa.bo")))?;
        let sa = maybe_dropout(tape, sa, &mut drop)?;
        x = tape.add(x, sa)?;
        // Cross-attention from queries onto the (masked) context.
        let t = ln(tape, x, bound, &p("ln2"))?;
        let cq = dense(tape, t, bound.id(&p("ca.wq")), bound.id(&p("ca.bq")))?;
        let ck = dense(tape, ctx, bound.id(&p("ca.wk")), bound.id(&p("ca.bk")))?;
        let cv = dense(tape, ctx, bound.id(&p("ca.wv")), bound.id(&p("ca.bv")))?;
        let ca = tape.cross_attn(cq, ck, cv, n, cfg.n_heads, shared, mask.map(|m| m.to_vec()))?;
        let ca = dense(tape, ca, bound.id(&p("ca.wo")), bound.id(&p("ca.bo")))?;
        let ca = maybe_dropout(tape, ca, &mut drop)?;
        x = tape.add(x, ca)?;
        // Position-wise feed-forward.
        let t = ln(tape, x, bound, &p("ln3"))?;
        let f = dense(tape, t, bound.id(&p("ff1.w")), bound.id(&p("ff1.b")))?;
        let f = tape.gelu(f);
        let f = dense(tape, f, bound.id(&p("ff2.w")), bound.id(&p("ff2.b")))?;
        let f = maybe_dropout(tape, f, &mut drop)?;
        x = tape.add(x, f)?;
    }
    let xf = ln(tape, x, bound, "final_ln")?;
    dense(tape, xf, bound.id("head.w"), bound.id("head.b"))
}
