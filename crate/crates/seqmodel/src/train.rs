//! Training loops: pretraining over a randomized-vehicle dataset and
//! target-vehicle finetuning constrained to an L2 ball around the
//! pretrained weights.
//!
//! Both loops share one core: Adam on the mean-squared error of normalized
//! target deltas, periodic evaluation (always including step 0 and the
//! final step), and a non-finite-loss guard that restores the last healthy
//! evaluation snapshot and stops instead of propagating NaNs into the
//! returned weights.

use autograd::{Adam, AdamConfig, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use simcar::{slice_windows, Dataset, WindowSample};

use crate::augment::{augment, AugmentConfig};
use crate::bind::Bound;
use crate::config::ModelConfig;
use crate::error::ModelError;
use crate::features::FeatureBatch;
use crate::model::DynamicsModel;
use crate::norm::NormStats;
use crate::weights::Weights;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub train_steps: usize,
    /// Evaluate every this many optimizer steps (step 0 and the last step
    /// are always evaluated).
    pub eval_interval: usize,
    /// Fraction of trajectories held out for validation.
    pub val_frac: f64,
    /// Anchor stride when cutting windows from trajectories.
    pub window_stride: usize,
    /// Cap on windows used per evaluation pass.
    pub max_eval_windows: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            batch_size: 64,
            train_steps: 2000,
            eval_interval: 200,
            val_frac: 0.1,
            window_stride: 1,
            max_eval_windows: 512,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(ModelError::Config(format!(
                "learning rate must be positive and finite, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be >= 1".into()));
        }
        if self.eval_interval == 0 {
            return Err(ModelError::Config("eval_interval must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_frac) {
            return Err(ModelError::Config(format!(
                "val_frac must lie in [0, 1), got {}",
                self.val_frac
            )));
        }
        if self.window_stride == 0 {
            return Err(ModelError::Config("window_stride must be >= 1".into()));
        }
        if self.max_eval_windows == 0 {
            return Err(ModelError::Config("max_eval_windows must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: usize,
    pub train_loss: f64,
    /// `None` when the validation split holds no complete window.
    pub val_loss: Option<f64>,
}

pub struct TrainOutcome {
    pub model: DynamicsModel,
    pub curve: Vec<EvalPoint>,
    /// True when a non-finite loss or gradient stopped training early; the
    /// returned weights are the last healthy evaluation snapshot.
    pub nan_aborted: bool,
}

/// Cut every trajectory of a dataset into training windows.
pub fn collect_windows(ds: &Dataset, k: usize, h: usize, stride: usize) -> Vec<WindowSample> {
    let mut out = Vec::new();
    for e in &ds.entries {
        out.extend(slice_windows(&e.traj, k, h, stride));
    }
    out
}

/// Mean-squared error of normalized target deltas over up to
/// `max_windows` windows; `None` when there are no windows.
pub fn eval_loss(
    model: &DynamicsModel,
    windows: &[WindowSample],
    max_windows: usize,
) -> Result<Option<f64>, ModelError> {
    if windows.is_empty() {
        return Ok(None);
    }
    let take = windows.len().min(max_windows);
    let mut sq_sum = 0.0f64;
    let mut count = 0usize;
    for chunk in windows[..take].chunks(256) {
        let refs: Vec<&WindowSample> = chunk.iter().collect();
        let batch = FeatureBatch::from_windows(&refs, &model.stats, None, true)?;
        let mut tape = Tape::new();
        let bound = Bound::inputs(&mut tape, &model.weights);
        let node = model.forward_batch(&mut tape, &bound, &batch, None)?;
        let pred = tape.value(node);
        let targets = model.targets_for_layout(&batch);
        debug_assert_eq!(pred.len(), targets.len());
        for (p, t) in pred.iter().zip(&targets) {
            let d = (*p - *t) as f64;
            sq_sum += d * d;
        }
        count += targets.len();
    }
    Ok(Some(sq_sum / count as f64))
}

/// Pretrain a fresh model on a multi-vehicle dataset. Normalization
/// statistics come from the training split only; augmentation (masking,
/// noise, attacks) is applied per sampled window.
pub fn pretrain(
    dataset: &Dataset,
    model_cfg: &ModelConfig,
    aug_cfg: &AugmentConfig,
    tc: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    tc.validate()?;
    aug_cfg.validate()?;
    model_cfg.validate()?;
    let (train_ds, val_ds) = dataset.split_trajectories(tc.val_frac, tc.seed);
    let k = model_cfg.k_hist;
    let h = model_cfg.horizon;
    let train_windows = collect_windows(&train_ds, k, h, tc.window_stride);
    if train_windows.is_empty() {
        return Err(ModelError::EmptyDataset("training windows"));
    }
    let val_windows = collect_windows(&val_ds, k, h, tc.window_stride);
    let stats = NormStats::from_windows(&train_windows)?;
    let model = DynamicsModel::new(model_cfg, stats, tc.seed)?;
    train_core(
        model,
        &train_windows,
        &val_windows,
        Some(aug_cfg),
        None,
        None,
        tc,
    )
}

/// Continue training an existing model on additional data, keeping its
/// normalization statistics and optimizer-free of any trust-ball
/// constraint. Used by on-policy collection to refresh the model with
/// accumulated data without restarting from a fresh initialization.
pub fn continue_training(
    model: &DynamicsModel,
    dataset: &Dataset,
    aug_cfg: Option<&AugmentConfig>,
    tc: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    tc.validate()?;
    if let Some(a) = aug_cfg {
        a.validate()?;
    }
    let k = model.cfg().k_hist;
    let h = model.cfg().horizon;
    let (train_ds, val_ds) = dataset.split_trajectories(tc.val_frac, tc.seed);
    let train_windows = collect_windows(&train_ds, k, h, tc.window_stride);
    if train_windows.is_empty() {
        return Err(ModelError::EmptyDataset("training windows"));
    }
    let val_windows = collect_windows(&val_ds, k, h, tc.window_stride);
    train_core(
        model.clone(),
        &train_windows,
        &val_windows,
        aug_cfg,
        None,
        None,
        tc,
    )
}

/// Finetune a pretrained model on a single target vehicle's dataset,
/// keeping the weights inside an L2 ball of radius `eps_tune` around the
/// pretrained weights (projected after every optimizer step). The target
/// dataset must carry estimated states (finetuning happens under the same
/// degraded observations the controller will see). `rehearsal_ratio > 0`
/// mixes that fraction of each batch from `rehearsal` (pretraining-style
/// data) to keep the in-context adaptation from washing out.
pub fn finetune(
    model_sim: &DynamicsModel,
    ft_dataset: &Dataset,
    rehearsal: Option<&Dataset>,
    eps_tune: f64,
    rehearsal_ratio: f64,
    tc: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    tc.validate()?;
    if !eps_tune.is_finite() || eps_tune < 0.0 {
        return Err(ModelError::Config(format!(
            "eps_tune must be finite and >= 0, got {eps_tune}"
        )));
    }
    if !(0.0..1.0).contains(&rehearsal_ratio) {
        return Err(ModelError::Config(format!(
            "rehearsal_ratio must lie in [0, 1), got {rehearsal_ratio}"
        )));
    }
    if rehearsal_ratio > 0.0 && tc.batch_size < 2 {
        return Err(ModelError::Config(
            "rehearsal mixing needs batch_size >= 2".into(),
        ));
    }
    if eps_tune == 0.0 {
        // Degenerate ball: the only feasible point is the pretrained model.
        return Ok(TrainOutcome {
            model: model_sim.clone(),
            curve: Vec::new(),
            nan_aborted: false,
        });
    }
    if ft_dataset
        .entries
        .iter()
        .any(|e| e.traj.estimated_states.is_none())
    {
        return Err(ModelError::MissingEstimates);
    }
    let k = model_sim.cfg().k_hist;
    let h = model_sim.cfg().horizon;
    let (train_ds, val_ds) = ft_dataset.split_trajectories(tc.val_frac, tc.seed);
    let train_windows = collect_windows(&train_ds, k, h, tc.window_stride);
    if train_windows.is_empty() {
        return Err(ModelError::EmptyDataset("finetuning windows"));
    }
    let val_windows = collect_windows(&val_ds, k, h, tc.window_stride);
    let reh_windows = if rehearsal_ratio > 0.0 {
        let Some(reh) = rehearsal else {
            return Err(ModelError::MissingRehearsal(rehearsal_ratio));
        };
        let w = collect_windows(reh, k, h, tc.window_stride);
        if w.is_empty() {
            return Err(ModelError::EmptyDataset("rehearsal windows"));
        }
        w
    } else {
        Vec::new()
    };
    let mix = if rehearsal_ratio > 0.0 {
        Some((reh_windows.as_slice(), rehearsal_ratio))
    } else {
        None
    };
    // Normalization statistics are reused from the pretrained model so the
    // finetuned weights keep operating on the same feature scales.
    let model = model_sim.clone();
    let sim_flat = model_sim.weights.flat();
    train_core(
        model,
        &train_windows,
        &val_windows,
        None,
        mix,
        Some((&sim_flat, eps_tune)),
        tc,
    )
}

/// Project `w` onto the closed L2 ball of radius `eps` around `center`,
/// iterating on the f32-rounded distance so the stored weights themselves
/// satisfy the bound exactly.
fn project_ball(w: &mut Weights, center: &[f32], eps: f64) {
    let mut flat = w.flat();
    debug_assert_eq!(flat.len(), center.len());
    let dist = |f: &[f32]| -> f64 {
        f.iter()
            .zip(center)
            .map(|(a, b)| {
                let d = (*a - *b) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    };
    let mut d = dist(&flat);
    if d <= eps || d == 0.0 {
        return;
    }
    let mut scale = eps / d;
    loop {
        for (f, c) in flat.iter_mut().zip(center) {
            *f = *c + ((*f - *c) as f64 * scale) as f32;
        }
        d = dist(&flat);
        if d <= eps {
            break;
        }
        scale = 1.0 - 1e-6;
    }
    w.set_flat(&flat)
        .expect("projection preserves the flat length");
}

#[allow(clippy::too_many_arguments)]
fn train_core(
    mut model: DynamicsModel,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    aug_cfg: Option<&AugmentConfig>,
    mix: Option<(&[WindowSample], f64)>,
    ball: Option<(&[f32], f64)>,
    tc: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    let adam_cfg = AdamConfig {
        lr: tc.lr as f32,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
    let mut opts: Vec<Adam> = model
        .weights
        .iter()
        .map(|(_, t)| Adam::new(adam_cfg.clone(), t.numel()))
        .collect::<Result<_, _>>()?;
    let mut rng_batch = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(0x5EED_0001));
    let mut rng_aug = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(0x5EED_0002));
    let mut rng_drop = ChaCha8Rng::seed_from_u64(tc.seed.wrapping_add(0x5EED_0003));
    let dropout = model.cfg().dropout;
    let (n_reh, reh_pool) = match mix {
        Some((pool, ratio)) => {
            let r = ((ratio * tc.batch_size as f64).round() as usize).clamp(1, tc.batch_size - 1);
            (r, pool)
        }
        None => (0, &[][..]),
    };
    let mut curve = Vec::new();
    let mut nan_aborted = false;
    let mut last_good = model.weights.flat();
    let mut tape = Tape::new();
    let mut scratch: Vec<WindowSample> = Vec::with_capacity(tc.batch_size);
    let mut step = 0usize;
    loop {
        let at_eval = step.is_multiple_of(tc.eval_interval) || step == tc.train_steps;
        if at_eval {
            let train_loss = eval_loss(&model, train_windows, tc.max_eval_windows)?
                .expect("training window pool is non-empty");
            let val_loss = eval_loss(&model, val_windows, tc.max_eval_windows)?;
            let healthy = train_loss.is_finite() && val_loss.is_none_or(|v| v.is_finite());
            if !healthy {
                model.weights
                .set_flat(&last_good)
                .expect("snapshot length matches the registry");
                nan_aborted = true;
                break;
            }
            last_good = model.weights.flat();
            curve.push(EvalPoint {
                step,
                train_loss,
                val_loss,
            });
        }
        if step == tc.train_steps {
            break;
        }
        // Assemble the batch: main pool plus an optional rehearsal share,
        // sampled with replacement.
        scratch.clear();
        let mut masks: Option<Vec<Vec<bool>>> = None;
        let n_main = tc.batch_size - n_reh;
        for b in 0..tc.batch_size {
            let w = if b < n_main {
                &train_windows[rng_batch.gen_range(0..train_windows.len())]
            } else {
                &reh_pool[rng_batch.gen_range(0..reh_pool.len())]
            };
            match aug_cfg {
                Some(cfg) => {
                    let (aw, m) = augment(w, cfg, &model.stats, &mut rng_aug)?;
                    scratch.push(aw);
                    masks.get_or_insert_with(Vec::new).push(m);
                }
                None => scratch.push(w.clone()),
            }
        }
        let refs: Vec<&WindowSample> = scratch.iter().collect();
        let batch = FeatureBatch::from_windows(&refs, &model.stats, masks.as_deref(), true)?;
        tape.reset();
        let bound = Bound::params(&mut tape, &model.weights);
        let drop = if dropout > 0.0 {
            Some((&mut rng_drop, dropout))
        } else {
            None
        };
        let pred = model.forward_batch(&mut tape, &bound, &batch, drop)?;
        let targets = model.targets_for_layout(&batch);
        let (rows, cols) = tape.dims(pred);
        debug_assert_eq!(rows * cols, targets.len());
        let tgt = tape.input_rows(rows, cols, &targets);
        let loss = tape.mse_loss(pred, tgt)?;
        let loss_val = tape.value(loss)[0];
        if !loss_val.is_finite() {
            model.weights
                .set_flat(&last_good)
                .expect("snapshot length matches the registry");
            nan_aborted = true;
            break;
        }
        tape.backward(loss)?;
        let ids = bound.ids().to_vec();
        let mut grad_fault = false;
        for (i, (name, tensor)) in model.weights.iter_mut().enumerate() {
            let Some(grad) = tape.grad(ids[i]) else {
                continue;
            };
            if opts[i].step(name, tensor.data_mut(), grad).is_err() {
                grad_fault = true;
                break;
            }
        }
        if grad_fault {
            model.weights
                .set_flat(&last_good)
                .expect("snapshot length matches the registry");
            nan_aborted = true;
            break;
        }
        if let Some((center, eps)) = ball {
            project_ball(&mut model.weights, center, eps);
        }
        step += 1;
    }
    Ok(TrainOutcome {
        model,
        curve,
        nan_aborted,
    })
}
