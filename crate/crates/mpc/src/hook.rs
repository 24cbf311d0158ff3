//! Pluggable covariance schedules for the sampler.
//!
//! After every planning step the tracking loop asks the hook for the
//! covariance to use on the next step, passing the step's samples and
//! costs so adaptive hooks can react to the observed cost landscape.

use crate::config::{ControllerConfig, CovPolicy};
use crate::spline::KnotVector;

/// Computes the sampling covariance for the next planning step.
pub trait CovarianceHook {
    fn update(
        &mut self,
        samples: &[KnotVector],
        costs: &[f64],
        cfg: &ControllerConfig,
    ) -> [f64; 2];
}

/// Always returns the configured diagonal unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct FixedCovariance;

impl CovarianceHook for FixedCovariance {
    fn update(&mut self, _: &[KnotVector], _: &[f64], cfg: &ControllerConfig) -> [f64; 2] {
        cfg.init_cov
    }
}

/// Geometric annealing: each call multiplies the current covariance by
/// `factor`, never dropping below `floor` in either dimension.
#[derive(Debug, Clone, Copy)]
pub struct AnnealedCovariance {
    current: Option<[f64; 2]>,
    pub factor: f64,
    pub floor: [f64; 2],
}

impl AnnealedCovariance {
    pub fn new(factor: f64, floor: [f64; 2]) -> Self {
        Self {
            current: None,
            factor,
            floor,
        }
    }
}

impl CovarianceHook for AnnealedCovariance {
    fn update(&mut self, _: &[KnotVector], _: &[f64], cfg: &ControllerConfig) -> [f64; 2] {
        let base = self.current.unwrap_or(cfg.init_cov);
        let next = [
            (base[0] * self.factor).max(self.floor[0]),
            (base[1] * self.factor).max(self.floor[1]),
        ];
        self.current = Some(next);
        next
    }
}

/// Builds the hook matching the config's covariance policy.
pub fn hook_from_policy(cfg: &ControllerConfig) -> Box<dyn CovarianceHook + Send> {
    match cfg.cov_policy {
        CovPolicy::Fixed => Box::new(FixedCovariance),
        CovPolicy::Anneal { factor, floor } => Box::new(AnnealedCovariance::new(factor, floor)),
    }
}
