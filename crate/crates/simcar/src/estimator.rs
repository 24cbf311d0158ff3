use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::SimError;
use crate::state::{wrap_angle, State};
use crate::trajectory::Trajectory;

/// Degradation model standing in for a real localization stack. White noise
/// per field, a position random walk (drift) partially corrected at a fixed
/// cadence (loop closure), occasional outliers, and output latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub pos_noise_std: f64,
    pub vel_noise_std: f64,
    pub heading_noise_std: f64,
    /// Random-walk scale, m/sqrt(s): position drift variance grows at
    /// drift_rate^2 per second.
    pub drift_rate: f64,
    pub outlier_prob: f64,
    /// An outlier multiplies one random dimension's noise envelope by this
    /// factor; the injected deviation is at least `outlier_scale * std` of
    /// that dimension.
    pub outlier_scale: f64,
    /// Every this many steps the accumulated drift is scaled by
    /// `correction_retain` (0 disables corrections).
    pub correction_interval: u32,
    /// Fraction of drift remaining after a correction.
    pub correction_retain: f64,
    pub latency_steps: u32,
}

impl NoiseModel {
    /// Motion-capture grade: estimates equal ground truth.
    pub fn mocap() -> Self {
        NoiseModel {
            pos_noise_std: 0.0,
            vel_noise_std: 0.0,
            heading_noise_std: 0.0,
            drift_rate: 0.0,
            outlier_prob: 0.0,
            outlier_scale: 1.0,
            correction_interval: 0,
            correction_retain: 1.0,
            latency_steps: 0,
        }
    }

    /// Map-building localization: moderate noise, slow drift, periodic
    /// partial corrections standing in for loop closures.
    pub fn slam() -> Self {
        NoiseModel {
            pos_noise_std: 0.010,
            vel_noise_std: 0.020,
            heading_noise_std: 0.005,
            drift_rate: 0.015,
            outlier_prob: 0.01,
            outlier_scale: 8.0,
            correction_interval: 250,
            correction_retain: 0.3,
            latency_steps: 1,
        }
    }

    /// Visual-inertial odometry: faster drift, rare corrections, more
    /// outliers and latency.
    pub fn vio() -> Self {
        NoiseModel {
            pos_noise_std: 0.020,
            vel_noise_std: 0.040,
            heading_noise_std: 0.010,
            drift_rate: 0.040,
            outlier_prob: 0.03,
            outlier_scale: 8.0,
            correction_interval: 0,
            correction_retain: 1.0,
            latency_steps: 2,
        }
    }

    pub fn preset(name: &str) -> Result<Self, SimError> {
        match name {
            "mocap" => Ok(Self::mocap()),
            "slam" => Ok(Self::slam()),
            "vio" => Ok(Self::vio()),
            other => Err(SimError::BadConfig(format!(
                "unknown estimator preset `{other}` (expected mocap, slam, or vio)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = [
            (self.pos_noise_std, "pos_noise_std"),
            (self.vel_noise_std, "vel_noise_std"),
            (self.heading_noise_std, "heading_noise_std"),
            (self.drift_rate, "drift_rate"),
            (self.outlier_scale, "outlier_scale"),
        ];
        for (value, field) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SimError::BadParam {
                    field,
                    reason: format!("must be finite and non-negative, got {value}"),
                });
            }
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(SimError::BadParam {
                field: "outlier_prob",
                reason: format!("must lie in [0, 1], got {}", self.outlier_prob),
            });
        }
        if !(0.0..=1.0).contains(&self.correction_retain) {
            return Err(SimError::BadParam {
                field: "correction_retain",
                reason: format!("must lie in [0, 1], got {}", self.correction_retain),
            });
        }
        Ok(())
    }

    /// Per-dimension white-noise standard deviations in state order.
    fn stds(&self) -> [f64; State::DIM] {
        [
            self.pos_noise_std,
            self.pos_noise_std,
            self.heading_noise_std,
            self.vel_noise_std,
            self.vel_noise_std,
            self.vel_noise_std,
        ]
    }
}

/// Online estimator emulation: feed ground-truth states one step at a time
/// and receive the degraded estimate for that step. The closed-loop runner
/// uses this directly; [`emulate`] replays a whole trajectory through it.
pub struct NoiseProcess<R: Rng> {
    nm: NoiseModel,
    dt: f64,
    rng: R,
    drift: (f64, f64),
    step: u64,
    queue: VecDeque<State>,
}

impl<R: Rng> NoiseProcess<R> {
    pub fn new(nm: NoiseModel, dt: f64, rng: R) -> Result<Self, SimError> {
        nm.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SimError::BadConfig(format!("dt {dt} must be > 0")));
        }
        Ok(NoiseProcess {
            nm,
            dt,
            rng,
            drift: (0.0, 0.0),
            step: 0,
            queue: VecDeque::new(),
        })
    }

    pub fn step(&mut self, truth: &State) -> State {
        self.step += 1;
        let step_std = self.nm.drift_rate * self.dt.sqrt();
        if step_std > 0.0 {
            let zx: f64 = StandardNormal.sample(&mut self.rng);
            let zy: f64 = StandardNormal.sample(&mut self.rng);
            self.drift.0 += step_std * zx;
            self.drift.1 += step_std * zy;
        }
        if self.nm.correction_interval > 0 && self.step.is_multiple_of(self.nm.correction_interval as u64) {
            self.drift.0 *= self.nm.correction_retain;
            self.drift.1 *= self.nm.correction_retain;
        }

        let stds = self.nm.stds();
        let mut est = truth.to_array();
        est[0] += self.drift.0;
        est[1] += self.drift.1;
        for (value, std) in est.iter_mut().zip(stds) {
            if std > 0.0 {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                *value += std * z;
            }
        }
        if self.nm.outlier_prob > 0.0 && self.rng.gen::<f64>() < self.nm.outlier_prob {
            // Outliers land in a random observed channel: only dimensions
            // with a nonzero noise envelope are candidates.
            let candidates: Vec<usize> = (0..State::DIM).filter(|d| stds[*d] > 0.0).collect();
            if !candidates.is_empty() {
                let dim = candidates[self.rng.gen_range(0..candidates.len())];
                // Guarantee the deviation actually clears the configured
                // envelope: magnitude at least outlier_scale * std.
                let z: f64 = StandardNormal.sample(&mut self.rng);
                let magnitude = self.nm.outlier_scale * stds[dim] * z.abs().max(1.0);
                est[dim] += magnitude.copysign(z);
            }
        }
        est[2] = wrap_angle(est[2]);
        let noisy = State::from_array(est);

        self.queue.push_back(noisy);
        if self.queue.len() > self.nm.latency_steps as usize {
            self.queue.pop_front().expect("just pushed")
        } else {
            // Warmup: repeat the oldest estimate until the pipe fills.
            *self.queue.front().expect("just pushed")
        }
    }
}

/// Replay a trajectory through the degradation model, filling
/// `estimated_states`. Ground truth is untouched.
pub fn emulate<R: Rng>(
    traj: &Trajectory,
    nm: &NoiseModel,
    dt: f64,
    rng: R,
) -> Result<Trajectory, SimError> {
    let mut process = NoiseProcess::new(*nm, dt, rng)?;
    let mut out = traj.clone();
    out.estimated_states = Some(traj.states.iter().map(|s| process.step(s)).collect());
    Ok(out)
}

/// Estimate-quality summary over one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    /// RMS error per state field; heading error is angle-wrapped.
    pub rms: [f64; State::DIM],
    /// Largest position error norm along the trajectory.
    pub max_drift: f64,
    /// Steps whose position error exceeds 5x the trajectory's RMS position
    /// error: a scale-free outlier heuristic, zero for clean estimates.
    pub outlier_count: usize,
}

pub fn error_report(traj: &Trajectory) -> Result<EstimateReport, SimError> {
    let est = traj
        .estimated_states
        .as_ref()
        .ok_or_else(|| SimError::BadConfig("error_report needs estimated_states".into()))?;
    let n = traj.states.len();
    if est.len() != n || n == 0 {
        return Err(SimError::BadConfig(format!(
            "estimated states length {} does not match {} ground-truth states",
            est.len(),
            n
        )));
    }
    let mut sq = [0.0f64; State::DIM];
    let mut pos_err = Vec::with_capacity(n);
    for (gt, e) in traj.states.iter().zip(est) {
        let mut diff = [0.0f64; State::DIM];
        let (g, h) = (gt.to_array(), e.to_array());
        for i in 0..State::DIM {
            diff[i] = h[i] - g[i];
        }
        diff[2] = wrap_angle(diff[2]);
        for i in 0..State::DIM {
            sq[i] += diff[i] * diff[i];
        }
        pos_err.push((diff[0] * diff[0] + diff[1] * diff[1]).sqrt());
    }
    let mut rms = [0.0f64; State::DIM];
    for i in 0..State::DIM {
        rms[i] = (sq[i] / n as f64).sqrt();
    }
    let rms_pos = (pos_err.iter().map(|e| e * e).sum::<f64>() / n as f64).sqrt();
    let max_drift = pos_err.iter().cloned().fold(0.0, f64::max);
    let outlier_count = if rms_pos > 0.0 {
        pos_err.iter().filter(|e| **e > 5.0 * rms_pos).count()
    } else {
        0
    };
    Ok(EstimateReport {
        rms,
        max_drift,
        outlier_count,
    })
}
