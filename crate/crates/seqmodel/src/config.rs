//! Model architecture selection and sizing.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

pub const D_MODEL: usize = 64;
pub const DEFAULT_PARAM_BUDGET: usize = 200_000;
/// Width of one raw token fed to the recurrent and convolutional baselines:
/// a state token occupies the first six slots, an action token the last two.
pub const TOKEN_DIM: usize = 8;
/// Temporal kernel width of the convolutional baseline.
pub const CONV_KERNEL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Transformer,
    Lstm,
    Gru,
    Cnn,
    Mlp,
}

impl Arch {
    pub fn name(self) -> &'static str {
        match self {
            Arch::Transformer => "transformer",
            Arch::Lstm => "lstm",
            Arch::Gru => "gru",
            Arch::Cnn => "cnn",
            Arch::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self, ModelError> {
        match s {
            "transformer" => Ok(Arch::Transformer),
            "lstm" => Ok(Arch::Lstm),
            "gru" => Ok(Arch::Gru),
            "cnn" => Ok(Arch::Cnn),
            "mlp" => Ok(Arch::Mlp),
            other => Err(ModelError::Config(format!("unknown architecture `{other}`"))),
        }
    }

    pub fn all() -> [Arch; 5] {
        [Arch::Transformer, Arch::Lstm, Arch::Gru, Arch::Cnn, Arch::Mlp]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Latent width; fixed at 64 by contract.
    pub d_model: usize,
    /// Decoder blocks for the transformer; conv layers for the CNN.
    pub n_layers: usize,
    pub n_heads: usize,
    pub ff_dim: usize,
    /// History length K: windows carry K+1 states and K actions, so the
    /// interleaved context holds 2K+1 tokens (2S-1 tokens for S states).
    pub k_hist: usize,
    /// Prediction horizon H.
    pub horizon: usize,
    /// Train-time dropout on residual branches; 0 disables.
    pub dropout: f64,
    pub max_param_budget: usize,
    /// Baseline width (LSTM/GRU hidden, CNN channels, MLP hidden);
    /// 0 auto-sizes to the largest width within the budget.
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: Arch::Transformer,
            d_model: D_MODEL,
            n_layers: 3,
            n_heads: 4,
            ff_dim: 128,
            k_hist: 64,
            horizon: 32,
            dropout: 0.0,
            max_param_budget: DEFAULT_PARAM_BUDGET,
            hidden: 0,
        }
    }
}

impl ModelConfig {
    pub fn for_arch(arch: Arch) -> Self {
        ModelConfig {
            arch,
            ..ModelConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model != D_MODEL {
            return Err(ModelError::Config(format!(
                "d_model is fixed at {D_MODEL}, got {}",
                self.d_model
            )));
        }
        if self.n_layers == 0 {
            return Err(ModelError::Config("n_layers must be at least 1".into()));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::Config(format!(
                "n_heads {} must divide d_model {}",
                self.n_heads, self.d_model
            )));
        }
        if self.ff_dim == 0 {
            return Err(ModelError::Config("ff_dim must be positive".into()));
        }
        if self.k_hist == 0 || self.horizon == 0 {
            return Err(ModelError::Config(
                "history length and horizon must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.max_param_budget == 0 {
            return Err(ModelError::Config("parameter budget must be positive".into()));
        }
        Ok(())
    }

    /// Number of context tokens for a full history window (2K+1).
    pub fn ctx_len(&self) -> usize {
        2 * self.k_hist + 1
    }

    /// States a full history holds (K+1).
    pub fn hist_states(&self) -> usize {
        self.k_hist + 1
    }
}
