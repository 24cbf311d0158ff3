//! Named parameter registry with deterministic ordering.
//!
//! Insertion order is the canonical order used for checkpoint layout, the
//! flattened parameter vector of the fine-tuning ball constraint, and the
//! pairing of Adam states with tensors.

use std::collections::HashMap;

use autograd::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{Arch, ModelConfig, CONV_KERNEL, TOKEN_DIM};
use crate::error::ModelError;
use crate::norm::{ACT_DIM, STATE_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl Weights {
    pub fn new() -> Self {
        Weights {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push(&mut self, name: impl Into<String>, t: Tensor) {
        let name = name.into();
        let prev = self.index.insert(name.clone(), self.entries.len());
        debug_assert!(prev.is_none(), "duplicate tensor name {name}");
        self.entries.push((name, t));
    }

    pub fn get(&self, name: &str) -> &Tensor {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown tensor `{name}`"));
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Tensor {
        let i = *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown tensor `{name}`"));
        &mut self.entries[i].1
    }

    pub fn position(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown tensor `{name}`"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_params(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, t)| t.is_finite())
    }

    /// All parameters flattened in registry order.
    pub fn flat(&self) -> Vec<f32> {
        let mut out = Vec::with_capacity(self.n_params());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Overwrite all parameters from a flat vector in registry order.
    pub fn set_flat(&mut self, flat: &[f32]) -> Result<(), ModelError> {
        if flat.len() != self.n_params() {
            return Err(ModelError::LengthMismatch {
                what: "flat parameter vector",
                got: flat.len(),
                want: self.n_params(),
            });
        }
        let mut off = 0;
        for (_, t) in &mut self.entries {
            let n = t.numel();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Global L2 distance between two parameter vectors, in f64.
    pub fn l2_distance(&self, other: &Weights) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        let mut acc = 0.0f64;
        for ((_, a), (_, b)) in self.entries.iter().zip(&other.entries) {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                let d = x as f64 - y as f64;
                acc += d * d;
            }
        }
        acc.sqrt()
    }
}

impl Default for Weights {
    fn default() -> Self {
        Self::new()
    }
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt() as f32;
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..=limit))
        .collect();
    Tensor::from_rows(rows, cols, data).expect("xavier shape is positive")
}

fn small_normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f32) -> Tensor {
    let dist = Normal::new(0.0f32, std).expect("std is positive");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::from_rows(rows, cols, data).expect("shape is positive")
}

fn ones(rows: usize, cols: usize) -> Tensor {
    Tensor::from_rows(rows, cols, vec![1.0; rows * cols]).expect("shape is positive")
}

fn dense(w: &mut Weights, rng: &mut ChaCha8Rng, prefix: &str, rows: usize, cols: usize) {
    w.push(format!("{prefix}.w"), xavier(rng, rows, cols));
    w.push(format!("{prefix}.b"), Tensor::zeros(1, cols));
}

fn layer_norm(w: &mut Weights, prefix: &str, dim: usize) {
    w.push(format!("{prefix}.g"), ones(1, dim));
    w.push(format!("{prefix}.b"), Tensor::zeros(1, dim));
}

fn attn(w: &mut Weights, rng: &mut ChaCha8Rng, prefix: &str, d: usize) {
    for nm in ["wq", "wk", "wv", "wo"] {
        w.push(format!("{prefix}.{nm}"), xavier(rng, d, d));
    }
    for nm in ["bq", "bk", "bv", "bo"] {
        w.push(format!("{prefix}.{nm}"), Tensor::zeros(1, d));
    }
}

/// Build the registry for `cfg`, already budget-validated by the caller via
/// `param_count`. The prediction head is always zero-initialized so an
/// untrained model predicts zero target deltas — the anchor state repeated.
pub fn init_weights(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Weights {
    let mut w = Weights::new();
    let d = cfg.d_model;
    match cfg.arch {
        Arch::Transformer => {
            dense(&mut w, rng, "enc_state", STATE_DIM, d);
            dense(&mut w, rng, "enc_act", ACT_DIM, d);
            w.push("pos_ctx", small_normal(rng, cfg.ctx_len(), d, 0.02));
            w.push("pos_query", small_normal(rng, cfg.horizon, d, 0.02));
            for l in 0..cfg.n_layers {
                layer_norm(&mut w, &format!("blk{l}.ln1"), d);
                attn(&mut w, rng, &format!("blk{l}.sa"), d);
                layer_norm(&mut w, &format!("blk{l}.ln2"), d);
                attn(&mut w, rng, &format!("blk{l}.ca"), d);
                layer_norm(&mut w, &format!("blk{l}.ln3"), d);
                dense(&mut w, rng, &format!("blk{l}.ff1"), d, cfg.ff_dim);
                dense(&mut w, rng, &format!("blk{l}.ff2"), cfg.ff_dim, d);
            }
            layer_norm(&mut w, "final_ln", d);
        }
        Arch::Lstm => {
            let h = cfg.hidden;
            w.push("cell.w", xavier(rng, TOKEN_DIM, 4 * h));
            w.push("cell.u", xavier(rng, h, 4 * h));
            w.push("cell.b", Tensor::zeros(1, 4 * h));
        }
        Arch::Gru => {
            let h = cfg.hidden;
            w.push("cell.w", xavier(rng, TOKEN_DIM, 3 * h));
            w.push("cell.u", xavier(rng, h, 3 * h));
            w.push("cell.b", Tensor::zeros(1, 3 * h));
        }
        Arch::Cnn => {
            let ch = cfg.hidden;
            dense(&mut w, rng, "embed", TOKEN_DIM, ch);
            for l in 0..cfg.n_layers {
                for o in 0..CONV_KERNEL {
                    w.push(format!("conv{l}.w{o}"), xavier(rng, ch, ch));
                }
                w.push(format!("conv{l}.b"), Tensor::zeros(1, ch));
            }
        }
        Arch::Mlp => {
            let h = cfg.hidden;
            dense(&mut w, rng, "fc1", mlp_input_dim(cfg), h);
            dense(&mut w, rng, "fc2", h, h);
        }
    }
    let (hr, hc) = head_shape(cfg);
    w.push("head.w", Tensor::zeros(hr, hc));
    w.push("head.b", Tensor::zeros(1, hc));
    w
}

fn head_shape(cfg: &ModelConfig) -> (usize, usize) {
    match cfg.arch {
        Arch::Transformer => (cfg.d_model, STATE_DIM),
        Arch::Lstm | Arch::Gru | Arch::Cnn => (cfg.hidden, STATE_DIM),
        Arch::Mlp => (cfg.hidden, cfg.horizon * STATE_DIM),
    }
}

pub fn mlp_input_dim(cfg: &ModelConfig) -> usize {
    (cfg.k_hist + 1) * STATE_DIM + cfg.k_hist * ACT_DIM + cfg.horizon * ACT_DIM
}

/// Closed-form parameter count for `cfg` with baseline width `hidden`.
pub fn param_count(cfg: &ModelConfig, hidden: usize) -> usize {
    let d = cfg.d_model;
    match cfg.arch {
        Arch::Transformer => {
            let mut n = (STATE_DIM * d + d) + (ACT_DIM * d + d);
            n += cfg.ctx_len() * d + cfg.horizon * d;
            let blk = 3 * 2 * d + 2 * 4 * (d * d + d) + (d * cfg.ff_dim + cfg.ff_dim) + (cfg.ff_dim * d + d);
            n += cfg.n_layers * blk;
            n += 2 * d;
            n + d * STATE_DIM + STATE_DIM
        }
        Arch::Lstm => {
            TOKEN_DIM * 4 * hidden + hidden * 4 * hidden + 4 * hidden + hidden * STATE_DIM + STATE_DIM
        }
        Arch::Gru => {
            TOKEN_DIM * 3 * hidden + hidden * 3 * hidden + 3 * hidden + hidden * STATE_DIM + STATE_DIM
        }
        Arch::Cnn => {
            (TOKEN_DIM * hidden + hidden)
                + cfg.n_layers * (CONV_KERNEL * hidden * hidden + hidden)
                + hidden * STATE_DIM
                + STATE_DIM
        }
        Arch::Mlp => {
            let d_in = mlp_input_dim(cfg);
            let out = cfg.horizon * STATE_DIM;
            d_in * hidden + hidden + hidden * hidden + hidden + hidden * out + out
        }
    }
}

/// Largest baseline width whose parameter count fits the budget.
pub fn auto_size(cfg: &ModelConfig) -> Result<usize, ModelError> {
    let floor = 4usize;
    if param_count(cfg, floor) > cfg.max_param_budget {
        return Err(ModelError::BudgetExceeded {
            count: param_count(cfg, floor),
            budget: cfg.max_param_budget,
        });
    }
    let mut lo = floor;
    let mut hi = 8192usize;
    while param_count(cfg, hi) <= cfg.max_param_budget {
        hi *= 2;
    }
    // Largest width with count <= budget; counts grow monotonically in width.
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if param_count(cfg, mid) <= cfg.max_param_budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Ok(lo)
}
