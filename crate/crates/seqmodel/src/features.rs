//! Window samples flattened into normalized feature matrices.
//!
//! Everything downstream of this module sees only anchor-frame, z-scored
//! features: history states (`n*s x 6`), history actions (`n*(s-1) x 2`),
//! query actions (`n*h x 2`) and target deltas (`n*h x 6`), all sample-major
//! row-major f32, plus each sample's anchor state for composing predictions
//! back into the world frame.

use simcar::{Action, State, WindowSample};

use crate::error::ModelError;
use crate::norm::{rel_input, rel_target, NormStats, ACT_DIM, STATE_DIM};

#[derive(Debug, Clone)]
pub struct FeatureBatch {
    pub n: usize,
    /// History states per sample (K+1).
    pub s: usize,
    /// Horizon (query steps per sample).
    pub h: usize,
    pub ctx_states: Vec<f32>,
    pub ctx_actions: Vec<f32>,
    pub query_actions: Vec<f32>,
    /// Normalized target deltas; empty when the batch is prediction-only.
    pub targets: Vec<f32>,
    /// Anchor (newest history) state per sample, used to compose world-frame
    /// predictions.
    pub anchors: Vec<State>,
    /// Cross-attention visibility per context token (`n * (2s-1)`), present
    /// only when augmentation masked something out.
    pub mask: Option<Vec<bool>>,
}

impl FeatureBatch {
    /// Assemble a batch from full windows. `masks`, when given, must hold
    /// one visibility vector of length 2s-1 per window.
    pub fn from_windows(
        windows: &[&WindowSample],
        stats: &NormStats,
        masks: Option<&[Vec<bool>]>,
        with_targets: bool,
    ) -> Result<FeatureBatch, ModelError> {
        let n = windows.len();
        if n == 0 {
            return Err(ModelError::EmptyDataset("batch"));
        }
        let s = windows[0].hist_states.len();
        let h = windows[0].future_actions.len();
        let ctx_len = 2 * s - 1;
        if let Some(ms) = masks {
            if ms.len() != n {
                return Err(ModelError::LengthMismatch {
                    what: "mask batch",
                    got: ms.len(),
                    want: n,
                });
            }
        }
        let mut out = FeatureBatch {
            n,
            s,
            h,
            ctx_states: Vec::with_capacity(n * s * STATE_DIM),
            ctx_actions: Vec::with_capacity(n * (s - 1) * ACT_DIM),
            query_actions: Vec::with_capacity(n * h * ACT_DIM),
            targets: Vec::with_capacity(if with_targets { n * h * STATE_DIM } else { 0 }),
            anchors: Vec::with_capacity(n),
            mask: masks.map(|_| Vec::with_capacity(n * ctx_len)),
        };
        for (i, w) in windows.iter().enumerate() {
            if w.hist_states.len() != s || w.future_actions.len() != h {
                return Err(ModelError::LengthMismatch {
                    what: "window lengths within batch",
                    got: w.hist_states.len(),
                    want: s,
                });
            }
            if w.hist_actions.len() != s - 1 {
                return Err(ModelError::LengthMismatch {
                    what: "history actions",
                    got: w.hist_actions.len(),
                    want: s - 1,
                });
            }
            let anchor = *w.hist_states.last().expect("s >= 1");
            push_history(&mut out, w, &anchor, stats);
            for a in &w.future_actions {
                out.query_actions.extend_from_slice(&stats.norm_action(a));
            }
            if with_targets {
                if w.future_states.len() != h {
                    return Err(ModelError::LengthMismatch {
                        what: "future states",
                        got: w.future_states.len(),
                        want: h,
                    });
                }
                for x in &w.future_states {
                    let feat = rel_target(x, &w.anchor_truth);
                    out.targets.extend_from_slice(&stats.norm_target(&feat));
                }
            }
            out.anchors.push(anchor);
            if let (Some(buf), Some(ms)) = (out.mask.as_mut(), masks) {
                if ms[i].len() != ctx_len {
                    return Err(ModelError::LengthMismatch {
                        what: "mask length",
                        got: ms[i].len(),
                        want: ctx_len,
                    });
                }
                buf.extend_from_slice(&ms[i]);
            }
        }
        Ok(out)
    }

    /// Assemble a prediction batch where every sample shares one history and
    /// differs only in its candidate action sequence.
    pub fn from_shared_history(
        hist_states: &[State],
        hist_actions: &[Action],
        seqs: &[Vec<Action>],
        horizon: usize,
        stats: &NormStats,
    ) -> Result<FeatureBatch, ModelError> {
        let s = hist_states.len();
        if s == 0 {
            return Err(ModelError::LengthMismatch {
                what: "history states",
                got: 0,
                want: 1,
            });
        }
        if hist_actions.len() != s - 1 {
            return Err(ModelError::LengthMismatch {
                what: "history actions",
                got: hist_actions.len(),
                want: s - 1,
            });
        }
        if seqs.is_empty() {
            return Err(ModelError::EmptyDataset("action sequences"));
        }
        let anchor = *hist_states.last().expect("s >= 1");
        let mut out = FeatureBatch {
            n: seqs.len(),
            s,
            h: horizon,
            ctx_states: Vec::with_capacity(s * STATE_DIM),
            ctx_actions: Vec::with_capacity((s - 1) * ACT_DIM),
            query_actions: Vec::with_capacity(seqs.len() * horizon * ACT_DIM),
            targets: Vec::new(),
            anchors: vec![anchor; seqs.len()],
            mask: None,
        };
        for x in hist_states {
            let feat = rel_input(x, &anchor);
            out.ctx_states.extend_from_slice(&stats.norm_state(&feat));
        }
        for a in hist_actions {
            out.ctx_actions.extend_from_slice(&stats.norm_action(a));
        }
        for seq in seqs {
            if seq.len() != horizon {
                return Err(ModelError::LengthMismatch {
                    what: "action sequence",
                    got: seq.len(),
                    want: horizon,
                });
            }
            for a in seq {
                out.query_actions.extend_from_slice(&stats.norm_action(a));
            }
        }
        Ok(out)
    }

    /// Context groups held in `ctx_states`: 1 for a shared history, else n.
    pub fn ctx_groups(&self) -> usize {
        self.ctx_states.len() / (self.s * STATE_DIM)
    }

    pub fn ctx_len(&self) -> usize {
        2 * self.s - 1
    }

    /// Tile a shared (1-group) context out to one copy per sample, for
    /// architectures that consume history and future as one stream.
    pub fn replicate_context(&mut self) {
        if self.n <= 1 || self.ctx_groups() != 1 {
            return;
        }
        let states = self.ctx_states.clone();
        let actions = self.ctx_actions.clone();
        self.ctx_states = Vec::with_capacity(states.len() * self.n);
        self.ctx_actions = Vec::with_capacity(actions.len() * self.n);
        for _ in 0..self.n {
            self.ctx_states.extend_from_slice(&states);
            self.ctx_actions.extend_from_slice(&actions);
        }
    }
}

fn push_history(out: &mut FeatureBatch, w: &WindowSample, anchor: &State, stats: &NormStats) {
    for x in &w.hist_states {
        let feat = rel_input(x, anchor);
        out.ctx_states.extend_from_slice(&stats.norm_state(&feat));
    }
    for a in &w.hist_actions {
        out.ctx_actions.extend_from_slice(&stats.norm_action(a));
    }
}

/// Raw token matrix for the recurrent baselines: interleaved history tokens
/// followed by the future-action tokens, laid out **time-major**
/// (`row = t * n + b`) so each step is one contiguous row block. State
/// tokens fill the first six columns, action tokens the last two.
pub fn time_major_tokens(batch: &FeatureBatch) -> Vec<f32> {
    let n = batch.n;
    let s = batch.s;
    let t_total = (2 * s - 1) + batch.h;
    let mut out = vec![0.0f32; t_total * n * crate::config::TOKEN_DIM];
    let td = crate::config::TOKEN_DIM;
    for b in 0..n {
        for i in 0..s {
            let t = 2 * i;
            let dst = (t * n + b) * td;
            let src = (b * s + i) * STATE_DIM;
            out[dst..dst + STATE_DIM].copy_from_slice(&batch.ctx_states[src..src + STATE_DIM]);
        }
        for i in 0..s - 1 {
            let t = 2 * i + 1;
            let dst = (t * n + b) * td + STATE_DIM;
            let src = (b * (s - 1) + i) * ACT_DIM;
            out[dst..dst + ACT_DIM].copy_from_slice(&batch.ctx_actions[src..src + ACT_DIM]);
        }
        for i in 0..batch.h {
            let t = 2 * s - 1 + i;
            let dst = (t * n + b) * td + STATE_DIM;
            let src = (b * batch.h + i) * ACT_DIM;
            out[dst..dst + ACT_DIM].copy_from_slice(&batch.query_actions[src..src + ACT_DIM]);
        }
    }
    out
}

/// Raw token matrix for the convolutional baseline: sample-major with
/// `PAD` zero rows on each side of every sample's token run, so temporal
/// shifts of the whole matrix never read across sample boundaries.
pub const CONV_PAD: usize = 2;

pub fn padded_tokens(batch: &FeatureBatch) -> (Vec<f32>, Vec<f32>) {
    let n = batch.n;
    let s = batch.s;
    let td = crate::config::TOKEN_DIM;
    let t_tok = (2 * s - 1) + batch.h;
    let span = t_tok + 2 * CONV_PAD;
    let mut out = vec![0.0f32; n * span * td];
    // 1.0 on token rows, 0.0 on pad rows; multiplied in after every conv
    // layer to keep pads at zero.
    let mut keep = vec![0.0f32; n * span];
    for b in 0..n {
        let base = b * span + CONV_PAD;
        for t in 0..t_tok {
            keep[base + t] = 1.0;
        }
        for i in 0..s {
            let dst = (base + 2 * i) * td;
            let src = (b * s + i) * STATE_DIM;
            out[dst..dst + STATE_DIM].copy_from_slice(&batch.ctx_states[src..src + STATE_DIM]);
        }
        for i in 0..s - 1 {
            let dst = (base + 2 * i + 1) * td + STATE_DIM;
            let src = (b * (s - 1) + i) * ACT_DIM;
            out[dst..dst + ACT_DIM].copy_from_slice(&batch.ctx_actions[src..src + ACT_DIM]);
        }
        for i in 0..batch.h {
            let dst = (base + 2 * s - 1 + i) * td + STATE_DIM;
            let src = (b * batch.h + i) * ACT_DIM;
            out[dst..dst + ACT_DIM].copy_from_slice(&batch.query_actions[src..src + ACT_DIM]);
        }
    }
    (out, keep)
}

/// Flat MLP input: per sample `[history states | history actions | queries]`.
pub fn flat_inputs(batch: &FeatureBatch) -> Vec<f32> {
    let n = batch.n;
    let s = batch.s;
    let per = s * STATE_DIM + (s - 1) * ACT_DIM + batch.h * ACT_DIM;
    let mut out = Vec::with_capacity(n * per);
    for b in 0..n {
        out.extend_from_slice(&batch.ctx_states[b * s * STATE_DIM..(b + 1) * s * STATE_DIM]);
        out.extend_from_slice(
            &batch.ctx_actions[b * (s - 1) * ACT_DIM..(b + 1) * (s - 1) * ACT_DIM],
        );
        out.extend_from_slice(&batch.query_actions[b * batch.h * ACT_DIM..(b + 1) * batch.h * ACT_DIM]);
    }
    out
}
