//! Adam with bias correction, operating on flat parameter slices.

use crate::error::GradError;

#[derive(Debug, Clone)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment state for one parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

impl Adam {
    pub fn new(cfg: AdamConfig, len: usize) -> Result<Self, GradError> {
        if cfg.lr <= 0.0 || !cfg.lr.is_finite() || !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) {
            return Err(GradError::BadHyper(format!(
                "adam lr {} beta1 {} beta2 {}",
                cfg.lr, cfg.beta1, cfg.beta2
            )));
        }
        Ok(Self {
            cfg,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn set_lr(&mut self, lr: f32) {
        self.cfg.lr = lr;
    }

    pub fn lr(&self) -> f32 {
        self.cfg.lr
    }

    /// One update over a parameter slice. `name` labels the parameter in
    /// non-finite gradient errors.
    pub fn step(&mut self, name: &str, theta: &mut [f32], grad: &[f32]) -> Result<(), GradError> {
        assert_eq!(theta.len(), self.m.len(), "adam state length mismatch");
        assert_eq!(theta.len(), grad.len(), "adam grad length mismatch");
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(GradError::NonFiniteGradient { name: name.into() });
        }
        self.t += 1;
        let b1 = self.cfg.beta1;
        let b2 = self.cfg.beta2;
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.cfg.lr;
        let eps = self.cfg.eps;
        for ((p, &g), (mi, vi)) in theta
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *mi = b1 * *mi + (1.0 - b1) * g;
            *vi = b2 * *vi + (1.0 - b2) * g * g;
            let mhat = *mi / bc1;
            let vhat = *vi / bc2;
            *p -= lr * mhat / (vhat.sqrt() + eps);
        }
        Ok(())
    }
}
