//! One planning step: sample knot perturbations, roll every candidate
//! through the predictor in batched calls, weight by softmax of the
//! negative normalized cost, and return the weighted-average plan with the
//! first action as the command.
//!
//! Guarantees by construction:
//! - sample 0 is the unperturbed warm start, so it competes in every batch;
//! - the returned plan's rollout cost never exceeds the warm start's on the
//!   same batch (the weighted mean is re-rolled once; if it loses to the
//!   warm start, the best sample is returned instead);
//! - all-non-finite cost batches fall back to the warm start and raise a
//!   fault flag instead of commanding garbage.

use rand::Rng;
use seqmodel::Predictor;
use simcar::{Action, State};

use crate::config::{ControllerConfig, ShiftPolicy, ARGMIN_LAMBDA};
use crate::cost::{rollout_cost, RefPoint};
use crate::error::MpcError;
use crate::sampler::sample_action_sequences;
use crate::spline::KnotVector;

/// Additive stabilizer in the min-max cost normalization; keeps the
/// normalized spread well-defined when all costs coincide.
pub const NORM_EPS: f64 = 1e-9;

/// Everything a planning step reads besides the model and the config.
#[derive(Debug, Clone, Copy)]
pub struct PlanRequest<'a> {
    /// Estimated state history, newest last (the predictor's `x0`).
    pub hist_states: &'a [State],
    /// Commanded actions aligned with the history (one fewer).
    pub hist_actions: &'a [Action],
    /// Reference per horizon step (position of the vehicle after 1..=H
    /// control periods).
    pub refs: &'a [RefPoint],
    /// Warm-started mean knots from the previous period.
    pub warm: &'a KnotVector,
    /// Sampling covariance for this step.
    pub cov: [f64; 2],
    /// Previously commanded action (anchors the action-increment cost).
    pub prev_action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanDiag {
    pub cost_min: f64,
    pub cost_mean: f64,
    pub cost_max: f64,
    /// Effective sample size of the softmax weights, 1 in argmin mode,
    /// 0 on an all-non-finite fault.
    pub ess: f64,
    /// Rollout cost of the plan actually returned.
    pub plan_cost: f64,
    pub n_nonfinite: usize,
    /// All rollouts were non-finite; the warm start was returned unchanged.
    pub fault: bool,
    /// The softmax mean rolled out worse than the warm start, so the best
    /// sample was returned instead.
    pub elite_fallback: bool,
    /// Temperature below the argmin threshold: best sample returned.
    pub argmin_mode: bool,
    /// Covariance used for this step's sampling.
    pub cov: [f64; 2],
}

pub struct PlanOutcome {
    /// First evaluated action of the returned plan.
    pub command: Action,
    /// The selected plan (softmax mean, best sample, or warm fallback).
    pub plan: KnotVector,
    /// Warm start for the next period, per the shift policy.
    pub next_warm: KnotVector,
    /// All sampled knot vectors (index 0 is the unperturbed warm start).
    pub samples: Vec<KnotVector>,
    /// Rollout cost per sample (non-finite rollouts become +inf).
    pub costs: Vec<f64>,
    pub diag: PlanDiag,
}

/// Softmax over negative min-max-normalized costs. Non-finite costs get
/// weight zero; if every cost is non-finite the result is all zeros.
/// Weights of finite costs sum to 1 and are invariant (up to rounding) to
/// adding a constant to every cost.
pub fn softmax_weights(costs: &[f64], lambda: f64) -> Vec<f64> {
    let finite = costs.iter().copied().filter(|c| c.is_finite());
    let min = finite.clone().fold(f64::INFINITY, f64::min);
    let max = finite.fold(f64::NEG_INFINITY, f64::max);
    if !min.is_finite() {
        return vec![0.0; costs.len()];
    }
    let denom = (max - min) + NORM_EPS;
    let mut weights: Vec<f64> = costs
        .iter()
        .map(|c| {
            if c.is_finite() {
                (-((c - min) / denom) / lambda).exp()
            } else {
                0.0
            }
        })
        .collect();
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        for w in &mut weights {
            *w /= sum;
        }
    }
    weights
}

/// Split the candidate sequences into `chunks` contiguous batches and roll
/// them out concurrently. Results keep sample order, so the chunk count
/// changes wall-clock time only, never the outcome.
fn predict_chunked<P: Predictor + Sync>(
    model: &P,
    hist_states: &[State],
    hist_actions: &[Action],
    seqs: &[Vec<Action>],
    chunks: usize,
) -> Result<Vec<Vec<State>>, MpcError> {
    let chunks = chunks.clamp(1, seqs.len().max(1));
    if chunks == 1 {
        return Ok(model.predict_shared(hist_states, hist_actions, seqs)?);
    }
    let per = seqs.len().div_ceil(chunks);
    let results: Vec<Result<Vec<Vec<State>>, seqmodel::ModelError>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = seqs
                .chunks(per)
                .map(|chunk| {
                    scope.spawn(move || model.predict_shared(hist_states, hist_actions, chunk))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("rollout worker panicked"))
                .collect()
        });
    let mut out = Vec::with_capacity(seqs.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

fn resolve_chunks(cfg_chunks: usize) -> usize {
    if cfg_chunks > 0 {
        cfg_chunks
    } else {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    }
}

/// One MPPI step. See the module docs for the guarantees; diagnostics
/// report cost statistics, the effective sample size, and fault flags.
pub fn mppi_plan<P: Predictor + Sync, R: Rng>(
    model: &P,
    req: &PlanRequest<'_>,
    cfg: &ControllerConfig,
    rng: &mut R,
) -> Result<PlanOutcome, MpcError> {
    cfg.validate()?;
    if model.horizon() != cfg.horizon {
        return Err(MpcError::HorizonMismatch {
            controller: cfg.horizon,
            predictor: model.horizon(),
        });
    }
    if req.refs.len() != cfg.horizon {
        return Err(MpcError::ReferenceLength {
            need: cfg.horizon,
            found: req.refs.len(),
        });
    }
    if req.warm.n_knots() != cfg.n_knots || req.warm.horizon() != cfg.horizon {
        return Err(MpcError::WarmStartShape {
            need: cfg.n_knots,
            need_horizon: cfg.horizon,
            found: req.warm.n_knots(),
            found_horizon: req.warm.horizon(),
        });
    }

    let samples = sample_action_sequences(req.warm, req.cov, cfg.n_samples, rng)?;
    let seqs: Vec<Vec<Action>> = samples
        .iter()
        .map(|s| s.evaluate_actions(cfg.steer_limit))
        .collect();
    let chunks = resolve_chunks(cfg.parallel_chunks);
    let preds = predict_chunked(model, req.hist_states, req.hist_actions, &seqs, chunks)?;

    let costs: Vec<f64> = preds
        .iter()
        .zip(&seqs)
        .map(|(p, s)| rollout_cost(p, s, req.refs, req.prev_action, &cfg.weights))
        .collect();

    let n_nonfinite = costs.iter().filter(|c| !c.is_finite()).count();
    let finite = costs.iter().copied().filter(|c| c.is_finite());
    let cost_min = finite.clone().fold(f64::INFINITY, f64::min);
    let cost_max = finite.clone().fold(f64::NEG_INFINITY, f64::max);
    let n_finite = costs.len() - n_nonfinite;
    let cost_mean = if n_finite > 0 {
        finite.sum::<f64>() / n_finite as f64
    } else {
        f64::INFINITY
    };

    let mut diag = PlanDiag {
        cost_min,
        cost_mean,
        cost_max,
        ess: 0.0,
        plan_cost: f64::INFINITY,
        n_nonfinite,
        fault: false,
        elite_fallback: false,
        argmin_mode: false,
        cov: req.cov,
    };

    // Every rollout exploded: keep the previous mean with zero perturbation
    // and let the caller see the fault.
    if n_finite == 0 {
        diag.fault = true;
        let plan = req.warm.clone();
        return Ok(finish(plan, &samples, costs, diag, cfg));
    }

    let argmin = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).expect("finite min exists"))
        .map(|(i, _)| i)
        .expect("non-empty cost vector");

    if cfg.temperature < ARGMIN_LAMBDA {
        diag.argmin_mode = true;
        diag.ess = 1.0;
        diag.plan_cost = costs[argmin];
        let plan = samples[argmin].clone();
        return Ok(finish(plan, &samples, costs, diag, cfg));
    }

    let weights = softmax_weights(&costs, cfg.temperature);
    diag.ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let mean = KnotVector::weighted_average(&samples, &weights)?;

    // Elite retention: re-roll the weighted mean once; if it does worse
    // than the warm start (sample 0), fall back to the best sample, whose
    // cost can never exceed the warm start's.
    let mean_seq = mean.evaluate_actions(cfg.steer_limit);
    let mean_pred = model.predict_shared(req.hist_states, req.hist_actions, &[mean_seq.clone()])?;
    let mean_cost = rollout_cost(
        &mean_pred[0],
        &mean_seq,
        req.refs,
        req.prev_action,
        &cfg.weights,
    );
    let plan = if mean_cost <= costs[0] {
        diag.plan_cost = mean_cost;
        mean
    } else {
        diag.elite_fallback = true;
        diag.plan_cost = costs[argmin];
        samples[argmin].clone()
    };
    Ok(finish(plan, &samples, costs, diag, cfg))
}

fn finish(
    plan: KnotVector,
    samples: &[KnotVector],
    costs: Vec<f64>,
    diag: PlanDiag,
    cfg: &ControllerConfig,
) -> PlanOutcome {
    let command = plan.evaluate_actions(cfg.steer_limit)[0];
    let next_warm = match cfg.shift {
        ShiftPolicy::ShiftOne => plan.shift_one(),
        ShiftPolicy::Hold => plan.clone(),
    };
    PlanOutcome {
        command,
        plan,
        next_warm,
        samples: samples.to_vec(),
        costs,
        diag,
    }
}
