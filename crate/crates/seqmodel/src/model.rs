//! The in-context dynamics model: configuration + weights + normalization,
//! with batched prediction entry points shared by training, evaluation,
//! and the sampling controller.

use autograd::{NodeId, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simcar::{Action, State, WindowSample};

use crate::bind::Bound;
use crate::config::{Arch, ModelConfig};
use crate::error::ModelError;
use crate::features::FeatureBatch;
use crate::norm::{NormStats, STATE_DIM};
use crate::weights::{auto_size, init_weights, mlp_input_dim, param_count, Weights};
use crate::{conv, mlp, rnn, tf};

/// Row order of a forward pass's `rows x 6` prediction matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputLayout {
    /// `row = sample * horizon + step` (transformer, conv, flat MLP).
    SampleMajor,
    /// `row = step * batch + sample` (recurrent nets).
    TimeMajor,
}

/// Windows per forward pass when evaluating many windows at once.
const PREDICT_CHUNK: usize = 256;

#[derive(Clone)]
pub struct DynamicsModel {
    cfg: ModelConfig,
    hidden: usize,
    pub weights: Weights,
    pub stats: NormStats,
}

impl DynamicsModel {
    /// Build a freshly initialized model. `cfg.hidden == 0` auto-sizes
    /// baseline widths to the parameter budget; the resolved count is
    /// checked against the budget for every architecture.
    pub fn new(cfg: &ModelConfig, stats: NormStats, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        stats.validate()?;
        let hidden = match cfg.arch {
            Arch::Transformer => 0,
            _ => {
                if cfg.hidden > 0 {
                    cfg.hidden
                } else {
                    auto_size(cfg)?
                }
            }
        };
        let count = param_count(cfg, hidden);
        if count > cfg.max_param_budget {
            return Err(ModelError::BudgetExceeded {
                count,
                budget: cfg.max_param_budget,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rcfg = cfg.clone();
        rcfg.hidden = hidden;
        let weights = init_weights(&rcfg, &mut rng);
        debug_assert_eq!(weights.n_params(), count);
        Ok(DynamicsModel {
            cfg: rcfg,
            hidden,
            weights,
            stats,
        })
    }

    /// Reassemble a model from loaded parts (checkpoint restore).
    pub fn from_parts(
        cfg: ModelConfig,
        weights: Weights,
        stats: NormStats,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        stats.validate()?;
        let hidden = cfg.hidden;
        Ok(DynamicsModel {
            cfg,
            hidden,
            weights,
            stats,
        })
    }

    pub fn cfg(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Resolved hidden width (0 for the transformer).
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_params(&self) -> usize {
        self.weights.n_params()
    }

    pub fn layout(&self) -> OutputLayout {
        match self.cfg.arch {
            Arch::Lstm | Arch::Gru => OutputLayout::TimeMajor,
            _ => OutputLayout::SampleMajor,
        }
    }

    /// Mutable access to a named tensor (used by tests to probe behavior
    /// with hand-set weights); panics on an unknown name.
    pub fn tensor_mut(&mut self, name: &str) -> &mut autograd::Tensor {
        self.weights.get_mut(name)
    }

    /// One forward pass over a feature batch. Returns the prediction node
    /// (`rows x 6` in `self.layout()` order). `drop` enables train-time
    /// dropout (transformer residual branches only).
    pub fn forward_batch(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &FeatureBatch,
        drop: Option<(&mut ChaCha8Rng, f64)>,
    ) -> Result<NodeId, ModelError> {
        if batch.h != self.cfg.horizon {
            return Err(ModelError::LengthMismatch {
                what: "prediction horizon",
                got: batch.h,
                want: self.cfg.horizon,
            });
        }
        match self.cfg.arch {
            Arch::Transformer => {
                let groups = batch.ctx_groups();
                let shared = groups == 1 && batch.n > 1;
                let ctx = tf::encode_context(
                    tape,
                    bound,
                    &self.cfg,
                    &batch.ctx_states,
                    &batch.ctx_actions,
                    groups,
                    batch.s,
                )?;
                tf::decode(
                    tape,
                    bound,
                    &self.cfg,
                    ctx,
                    &batch.query_actions,
                    batch.n,
                    shared,
                    batch.mask.as_deref(),
                    drop,
                )
            }
            Arch::Lstm => rnn::forward_rnn(tape, bound, batch, self.hidden, true),
            Arch::Gru => rnn::forward_rnn(tape, bound, batch, self.hidden, false),
            Arch::Cnn => conv::forward_cnn(tape, bound, self.cfg.n_layers, batch, self.hidden),
            Arch::Mlp => mlp::forward_mlp(tape, bound, batch, mlp_input_dim(&self.cfg)),
        }
    }

    /// Targets reordered to match this model's output layout.
    pub fn targets_for_layout(&self, batch: &FeatureBatch) -> Vec<f32> {
        match self.layout() {
            OutputLayout::SampleMajor => batch.targets.clone(),
            OutputLayout::TimeMajor => {
                let (n, h) = (batch.n, batch.h);
                let mut out = vec![0.0f32; batch.targets.len()];
                for i in 0..n {
                    for t in 0..h {
                        let src = (i * h + t) * STATE_DIM;
                        let dst = (t * n + i) * STATE_DIM;
                        out[dst..dst + STATE_DIM]
                            .copy_from_slice(&batch.targets[src..src + STATE_DIM]);
                    }
                }
                out
            }
        }
    }

    /// Decode a forward pass's output rows into absolute predicted states.
    fn decode_rows(&self, rows: &[f32], batch: &FeatureBatch) -> Vec<Vec<State>> {
        let (n, h) = (batch.n, batch.h);
        debug_assert_eq!(rows.len(), n * h * STATE_DIM);
        let layout = self.layout();
        (0..n)
            .map(|i| {
                let anchor = batch.anchors[i];
                (0..h)
                    .map(|t| {
                        let r = match layout {
                            OutputLayout::SampleMajor => i * h + t,
                            OutputLayout::TimeMajor => t * n + i,
                        };
                        let mut d = [0.0f32; STATE_DIM];
                        d.copy_from_slice(&rows[r * STATE_DIM..(r + 1) * STATE_DIM]);
                        self.stats.denorm_target(&anchor, &d)
                    })
                    .collect()
            })
            .collect()
    }

    fn run_batch(&self, batch: &FeatureBatch) -> Result<Vec<Vec<State>>, ModelError> {
        let mut tape = Tape::new();
        let bound = Bound::inputs(&mut tape, &self.weights);
        let node = self.forward_batch(&mut tape, &bound, batch, None)?;
        Ok(self.decode_rows(tape.value(node), batch))
    }

    /// Predict the future-state rollout for each window independently.
    pub fn predict_each(&self, windows: &[WindowSample]) -> Result<Vec<Vec<State>>, ModelError> {
        let mut out = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(PREDICT_CHUNK.max(1)) {
            let refs: Vec<&WindowSample> = chunk.iter().collect();
            let batch = FeatureBatch::from_windows(&refs, &self.stats, None, false)?;
            out.extend(self.run_batch(&batch)?);
        }
        Ok(out)
    }

    /// Predict rollouts for many candidate action sequences that all share
    /// one history. The transformer encodes the context once and attends
    /// all candidates onto it; baselines replicate the history per sample.
    pub fn predict_shared(
        &self,
        hist_states: &[State],
        hist_actions: &[Action],
        seqs: &[Vec<Action>],
    ) -> Result<Vec<Vec<State>>, ModelError> {
        let mut batch = FeatureBatch::from_shared_history(
            hist_states,
            hist_actions,
            seqs,
            self.cfg.horizon,
            &self.stats,
        )?;
        if !matches!(self.cfg.arch, Arch::Transformer) && batch.n > 1 {
            batch.replicate_context();
        }
        self.run_batch(&batch)
    }

    /// Context token matrix (`2S-1 x d_model`) the transformer attends to
    /// for a given history; transformer-only.
    pub fn build_context(
        &self,
        hist_states: &[State],
        hist_actions: &[Action],
    ) -> Result<Vec<Vec<f32>>, ModelError> {
        if !matches!(self.cfg.arch, Arch::Transformer) {
            return Err(ModelError::ArchMismatch {
                op: "build_context",
                arch: self.cfg.arch.name(),
            });
        }
        let s = hist_states.len();
        if s == 0 || s > self.cfg.hist_states() {
            return Err(ModelError::LengthMismatch {
                what: "history states",
                got: s,
                want: self.cfg.hist_states(),
            });
        }
        if hist_actions.len() != s - 1 {
            return Err(ModelError::LengthMismatch {
                what: "history actions",
                got: hist_actions.len(),
                want: s - 1,
            });
        }
        let anchor = hist_states[s - 1];
        let mut ctx_states = Vec::with_capacity(s * STATE_DIM);
        for st in hist_states {
            ctx_states.extend_from_slice(&self.stats.norm_state(&crate::norm::rel_input(st, &anchor)));
        }
        let mut ctx_actions = Vec::with_capacity((s - 1) * 2);
        for a in hist_actions {
            ctx_actions.extend_from_slice(&self.stats.norm_action(a));
        }
        let mut tape = Tape::new();
        let bound = Bound::inputs(&mut tape, &self.weights);
        let node = tf::encode_context(
            &mut tape,
            &bound,
            &self.cfg,
            &ctx_states,
            &ctx_actions,
            1,
            s,
        )?;
        let d = self.cfg.d_model;
        let vals = tape.value(node);
        Ok((0..2 * s - 1)
            .map(|r| vals[r * d..(r + 1) * d].to_vec())
            .collect())
    }
}
