use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Hard cap on steering magnitude for any vehicle in the fleet, radians.
/// Individual vehicles further restrict steering to their own `delta_max`;
/// that per-vehicle clamp is applied by controllers and by the simulator.
pub const STEER_HARD_LIMIT: f64 = 0.7;

/// Wrap an angle to the half-open interval (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut x = a.rem_euclid(two_pi);
    if x > std::f64::consts::PI {
        x -= two_pi;
    }
    x
}

/// Planar vehicle state: world-frame pose plus body-frame velocities.
///
/// `psi` is kept wrapped to (-pi, pi]. `vx`/`vy` are longitudinal/lateral
/// speed in the body frame; `omega` is yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub px: f64,
    pub py: f64,
    pub psi: f64,
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl State {
    pub const DIM: usize = 6;

    pub fn new(px: f64, py: f64, psi: f64, vx: f64, vy: f64, omega: f64) -> Self {
        State {
            px,
            py,
            psi: wrap_angle(psi),
            vx,
            vy,
            omega,
        }
    }

    /// All-zero state at the origin.
    pub fn origin() -> Self {
        State::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    /// Checks every field for NaN/inf, naming the first offender.
    pub fn validate(&self) -> Result<(), SimError> {
        for (value, field) in [
            (self.px, "px"),
            (self.py, "py"),
            (self.psi, "psi"),
            (self.vx, "vx"),
            (self.vy, "vy"),
            (self.omega, "omega"),
        ] {
            if !value.is_finite() {
                return Err(SimError::NonFinite { field });
            }
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; Self::DIM] {
        [self.px, self.py, self.psi, self.vx, self.vy, self.omega]
    }

    pub fn from_array(a: [f64; Self::DIM]) -> Self {
        State::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    /// Planar speed magnitude.
    pub fn speed(&self) -> f64 {
        (self.vx * self.vx + self.vy * self.vy).sqrt()
    }

    pub fn field_name(i: usize) -> &'static str {
        ["px", "py", "psi", "vx", "vy", "omega"][i]
    }
}

/// Control command. Construction clamps throttle to [-1, 1] and steering to
/// the fleet-wide hard limit; per-vehicle steering limits are applied by
/// [`Action::clamped_to`] or by the simulator against `VehicleParams`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    throttle: f64,
    steer: f64,
}

impl Action {
    pub const DIM: usize = 2;

    pub fn new(throttle: f64, steer: f64) -> Self {
        Action {
            throttle: throttle.clamp(-1.0, 1.0),
            steer: steer.clamp(-STEER_HARD_LIMIT, STEER_HARD_LIMIT),
        }
    }

    /// Clamp steering against a specific vehicle's limit as well.
    pub fn clamped_to(throttle: f64, steer: f64, delta_max: f64) -> Self {
        let cap = delta_max.min(STEER_HARD_LIMIT);
        Action {
            throttle: throttle.clamp(-1.0, 1.0),
            steer: steer.clamp(-cap, cap),
        }
    }

    pub fn zero() -> Self {
        Action {
            throttle: 0.0,
            steer: 0.0,
        }
    }

    pub fn throttle(&self) -> f64 {
        self.throttle
    }

    pub fn steer(&self) -> f64 {
        self.steer
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !self.throttle.is_finite() {
            return Err(SimError::NonFinite { field: "throttle" });
        }
        if !self.steer.is_finite() {
            return Err(SimError::NonFinite { field: "steer" });
        }
        Ok(())
    }

    pub fn to_array(&self) -> [f64; Self::DIM] {
        [self.throttle, self.steer]
    }
}
