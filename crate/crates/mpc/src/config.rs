use serde::{Deserialize, Serialize};
use simcar::STEER_HARD_LIMIT;

use crate::error::MpcError;

/// Temperatures below this threshold select the single best sample instead
/// of softmax averaging (the λ → 0⁺ limit, computed without under/overflow).
pub const ARGMIN_LAMBDA: f64 = 1e-6;

/// Cost-to-go weights: position error squared, wrapped absolute heading
/// error, absolute longitudinal-speed error, and the action-increment norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardWeights {
    pub pos: f64,
    pub heading: f64,
    pub speed: f64,
    pub effort: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            pos: 4.0,
            heading: 1.0,
            speed: 2.0,
            effort: 0.1,
        }
    }
}

/// How the mean knot vector carries over to the next control period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShiftPolicy {
    /// Resample every knot one control period later (receding horizon).
    ShiftOne,
    /// Keep the plan unchanged as the next warm start.
    Hold,
}

/// Built-in covariance schedule applied after every plan step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CovPolicy {
    /// Always sample with the configured initial covariance.
    Fixed,
    /// Multiply the covariance by `factor` each step, clamped at `floor`.
    Anneal { factor: f64, floor: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Sampled action sequences per plan step (index 0 is always the
    /// unperturbed mean).
    pub n_samples: usize,
    /// Rollout horizon in control periods; must equal the predictor's.
    pub horizon: usize,
    /// Spline knots per action dimension, at uniform time indices over the
    /// horizon.
    pub n_knots: usize,
    /// Softmax temperature on min-max-normalized costs.
    pub temperature: f64,
    /// Diagonal sampling covariance per action dimension
    /// (throttle, steer), in knot space.
    pub init_cov: [f64; 2],
    pub weights: RewardWeights,
    pub shift: ShiftPolicy,
    pub cov_policy: CovPolicy,
    /// Steering box half-width applied after spline evaluation.
    pub steer_limit: f64,
    /// Rollout batches evaluated concurrently (the samples are independent;
    /// results are concatenated in sample order, so the chunk count never
    /// changes the outcome). 0 means one chunk per available core.
    pub parallel_chunks: usize,
}

impl ControllerConfig {
    pub fn with_defaults(horizon: usize, n_knots: usize) -> Self {
        ControllerConfig {
            n_samples: 600,
            horizon,
            n_knots,
            temperature: 0.05,
            init_cov: [0.09, 0.04],
            weights: RewardWeights::default(),
            shift: ShiftPolicy::ShiftOne,
            cov_policy: CovPolicy::Fixed,
            steer_limit: STEER_HARD_LIMIT,
            parallel_chunks: 0,
        }
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.n_samples < 2 {
            return Err(MpcError::BadConfig(format!(
                "n_samples must be >= 2, got {}",
                self.n_samples
            )));
        }
        if self.horizon == 0 {
            return Err(MpcError::BadConfig("horizon must be >= 1".into()));
        }
        if self.n_knots == 0 || self.n_knots > self.horizon {
            return Err(MpcError::BadConfig(format!(
                "n_knots must lie in [1, horizon={}], got {}",
                self.horizon, self.n_knots
            )));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(MpcError::BadConfig(format!(
                "temperature must be positive and finite, got {}",
                self.temperature
            )));
        }
        validate_cov("init_cov", &self.init_cov)?;
        for (name, w) in [
            ("pos", self.weights.pos),
            ("heading", self.weights.heading),
            ("speed", self.weights.speed),
            ("effort", self.weights.effort),
        ] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(MpcError::BadConfig(format!(
                    "weight {name} must be finite and >= 0, got {w}"
                )));
            }
        }
        if !(self.steer_limit.is_finite()
            && self.steer_limit > 0.0
            && self.steer_limit <= STEER_HARD_LIMIT)
        {
            return Err(MpcError::BadConfig(format!(
                "steer_limit must lie in (0, {STEER_HARD_LIMIT}], got {}",
                self.steer_limit
            )));
        }
        if let CovPolicy::Anneal { factor, floor } = self.cov_policy {
            if !(factor.is_finite() && 0.0 < factor && factor <= 1.0) {
                return Err(MpcError::BadConfig(format!(
                    "anneal factor must lie in (0, 1], got {factor}"
                )));
            }
            validate_cov("anneal floor", &floor)?;
        }
        Ok(())
    }
}

fn validate_cov(what: &str, cov: &[f64; 2]) -> Result<(), MpcError> {
    for v in cov {
        if !(v.is_finite() && *v > 0.0) {
            return Err(MpcError::BadConfig(format!(
                "{what} must be positive definite (diagonal entries > 0), got {cov:?}"
            )));
        }
    }
    Ok(())
}
