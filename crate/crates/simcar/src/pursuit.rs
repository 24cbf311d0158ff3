use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::state::{wrap_angle, State};
use crate::track::ReferenceTrack;

/// Geometric pure pursuit: aim at a point `lookahead` meters down the track
/// and return delta = atan2(2 * wheelbase * sin(alpha), L_d) clamped to the
/// vehicle's steering limit, where alpha is the bearing of the target in the
/// body frame and L_d the actual distance to it.
pub fn pure_pursuit_steer(
    state: &State,
    track: &ReferenceTrack,
    lookahead: f64,
    wheelbase: f64,
    delta_max: f64,
) -> Result<f64, SimError> {
    if track.is_empty() {
        return Err(SimError::BadConfig("pure pursuit needs a non-empty track".into()));
    }
    if !(lookahead.is_finite() && lookahead > 0.0) {
        return Err(SimError::BadConfig(format!(
            "lookahead {lookahead} must be > 0"
        )));
    }
    let (tx, ty) = track.lookahead_point(state.px, state.py, lookahead);
    let dx = tx - state.px;
    let dy = ty - state.py;
    let dist = (dx * dx + dy * dy).sqrt();
    if dist < 1e-9 {
        // Standing on the target point: no usable geometry, hold straight.
        return Ok(0.0);
    }
    let alpha = wrap_angle(dy.atan2(dx) - state.psi);
    let delta = (2.0 * wheelbase * alpha.sin()).atan2(dist);
    Ok(delta.clamp(-delta_max, delta_max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        PdGains { kp: 0.8, kd: 0.05 }
    }
}

impl PdGains {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.kp.is_finite() && self.kp > 0.0) {
            return Err(SimError::BadConfig(format!("kp {} must be > 0", self.kp)));
        }
        if !self.kd.is_finite() {
            return Err(SimError::BadConfig(format!("kd {} must be finite", self.kd)));
        }
        Ok(())
    }
}

/// Speed regulation: throttle = clamp(kp * (target - vx) - kd * accel, -1, 1).
/// `accel_estimate` is the caller's finite-difference estimate of the
/// current longitudinal acceleration (damps overshoot).
pub fn pd_throttle(vx: f64, target_speed: f64, gains: &PdGains, accel_estimate: f64) -> f64 {
    (gains.kp * (target_speed - vx) - gains.kd * accel_estimate).clamp(-1.0, 1.0)
}
