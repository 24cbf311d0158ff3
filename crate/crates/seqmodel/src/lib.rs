//! In-context dynamics models for wheeled vehicles.
//!
//! This crate turns logged driving episodes into multi-step dynamics
//! predictors that adapt to the vehicle at hand purely through their
//! input window — no weight updates at deployment. The centerpiece is a
//! decoder-style transformer: the recent history of (estimated) states
//! and actions forms a context the model cross-attends to, and a sequence
//! of future actions queries it for the resulting state deltas, expressed
//! in the frame of the newest history state so predictions are invariant
//! to where and which way the vehicle happens to sit.
//!
//! What lives here:
//! - anchor-frame feature normalization ([`NormStats`], [`rel_input`])
//! - the model itself ([`DynamicsModel`]) over five interchangeable
//!   architectures ([`Arch`]): transformer, LSTM, GRU, temporal CNN, MLP,
//!   all auto-sized to a shared parameter budget
//! - training-time robustness augmentation ([`AugmentConfig`]): context
//!   masking, state/action noise, out-of-range attack injection
//! - pretraining over randomized vehicles ([`pretrain`]) and
//!   ball-constrained finetuning on one target vehicle ([`finetune`])
//! - the [`Predictor`] interface the sampling controller plans against,
//!   with simulator-oracle and hold-anchor references
//! - integrity-checked checkpoints ([`checkpoint::save`],
//!   [`checkpoint::load`])

mod augment;
mod bind;
pub mod checkpoint;
mod config;
mod conv;
mod error;
mod features;
mod mlp;
mod model;
mod norm;
mod predictor;
mod rnn;
mod tf;
mod train;
mod weights;

pub use augment::{augment, AugmentConfig, ATTACK_DIMS};
pub use autograd::{Adam, AdamConfig, GradError, NodeId, Tape, Tensor};
pub use bind::Bound;
pub use config::{Arch, ModelConfig, CONV_KERNEL, DEFAULT_PARAM_BUDGET, D_MODEL, TOKEN_DIM};
pub use error::ModelError;
pub use features::{flat_inputs, padded_tokens, time_major_tokens, FeatureBatch, CONV_PAD};
pub use model::{DynamicsModel, OutputLayout};
pub use norm::{
    compose, rel_input, rel_target, NormStats, ACT_DIM, STATE_DIM, STD_FLOOR,
};
pub use predictor::{DbmPredictor, Predictor, ZeroDeltaPredictor};
pub use train::{
    collect_windows, continue_training, eval_loss, finetune, pretrain, EvalPoint, TrainConfig,
    TrainOutcome,
};
pub use weights::{auto_size, init_weights, mlp_input_dim, param_count, Weights};
