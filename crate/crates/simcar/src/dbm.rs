use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::params::VehicleParams;
use crate::state::{wrap_angle, Action, State};
use crate::trajectory::Trajectory;

pub const GRAVITY: f64 = 9.81;

/// Below this longitudinal speed the dynamic single-track equations blend
/// into the kinematic bicycle to avoid the slip-angle blow-up at vx -> 0.
pub const VX_BLEND: f64 = 0.1;

/// Simulation stepping configuration. `dt` is the control period (one
/// [`dbm_step`] call); integration subdivides it into `substeps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub substeps: u32,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 0.02,
            substeps: 5,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::BadConfig(format!("dt {} must be > 0", self.dt)));
        }
        if self.substeps == 0 {
            return Err(SimError::BadConfig("substeps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Lateral tire forces with their saturation caps, exposed so tests and
/// parameter identification can inspect the force law directly.
#[derive(Debug, Clone, Copy)]
pub struct TireForces {
    pub fyf: f64,
    pub fyr: f64,
    pub cap_f: f64,
    pub cap_r: f64,
    pub alpha_f: f64,
    pub alpha_r: f64,
}

/// Linear cornering stiffness clamped at mu * Fz per axle (brush-model
/// saturation). Normal load splits statically by lever arm; payload is
/// assumed at the center of mass so the split is unchanged.
pub fn lateral_tire_forces(state: &State, delta: f64, params: &VehicleParams) -> TireForces {
    let alpha_f = (state.vy + params.lf * state.omega).atan2(state.vx) - delta;
    let alpha_r = (state.vy - params.lr * state.omega).atan2(state.vx);
    let m_total = params.total_mass();
    let l = params.wheelbase();
    let fz_f = m_total * GRAVITY * params.lr / l;
    let fz_r = m_total * GRAVITY * params.lf / l;
    let cap_f = params.friction_f * fz_f;
    let cap_r = params.friction_r * fz_r;
    TireForces {
        fyf: (-params.cf * alpha_f).clamp(-cap_f, cap_f),
        fyr: (-params.cr * alpha_r).clamp(-cap_r, cap_r),
        cap_f,
        cap_r,
        alpha_f,
        alpha_r,
    }
}

fn sign_or_zero(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Advance one control period. Stateless: actuator latency is realized by
/// the caller's action queue (see [`rollout`]), so `action` here is whatever
/// reaches the actuators this period.
///
/// Integration is semi-implicit Euler over `cfg.substeps`: velocities are
/// updated from forces at the current state, then the pose integrates the
/// new velocities. Resistance (rolling + linear drag) is applied as a
/// separate decay that never flips the sign of vx within a substep, so a
/// resting vehicle stays exactly at rest.
pub fn dbm_step(
    state: &State,
    action: &Action,
    params: &VehicleParams,
    cfg: &SimConfig,
) -> Result<State, SimError> {
    state.validate()?;
    action.validate()?;
    cfg.validate()?;

    let h = cfg.dt / cfg.substeps as f64;
    let m_total = params.total_mass();
    let iz = params.total_yaw_inertia();
    let l = params.wheelbase();
    let delta = action.steer().clamp(-params.delta_max, params.delta_max);
    // Motor force is sized by the unloaded chassis, so payload and tow mass
    // degrade achievable acceleration.
    let fx_motor = params.mass * params.max_accel * action.throttle();
    let drag_total = params.drag_coeff + params.tow_drag;

    let mut px = state.px;
    let mut py = state.py;
    let mut psi = state.psi;
    let mut vx = state.vx;
    let mut vy = state.vy;
    let mut omega = state.omega;

    for _ in 0..cfg.substeps {
        let current = State {
            px,
            py,
            psi,
            vx,
            vy,
            omega,
        };
        let tf = lateral_tire_forces(&current, delta, params);

        // Longitudinal: motor and front-tire reaction first, then the
        // resistance decay clamped at zero crossing.
        let ax = (fx_motor - tf.fyf * delta.sin()) / m_total + vy * omega;
        let vx_mid = vx + h * ax;
        let resist = params.rolling_resistance * sign_or_zero(vx_mid) + drag_total * vx_mid;
        let dv = h * resist / m_total;
        let vx_new = if dv.abs() >= vx_mid.abs() {
            0.0
        } else {
            vx_mid - dv
        };

        let ay = (tf.fyf * delta.cos() + tf.fyr) / m_total - vx * omega;
        let vy_dyn = vy + h * ay;
        let domega = (params.lf * tf.fyf * delta.cos() - params.lr * tf.fyr) / iz;
        let omega_dyn = omega + h * domega;

        // Kinematic bicycle at the new longitudinal speed; lateral velocity
        // and yaw rate follow algebraically from geometry.
        let tan_d = delta.tan();
        let vy_kin = vx_new * params.lr * tan_d / l;
        let omega_kin = vx_new * tan_d / l;

        let w = (vx_new.abs() / VX_BLEND).min(1.0);
        vx = vx_new;
        vy = w * vy_dyn + (1.0 - w) * vy_kin;
        omega = w * omega_dyn + (1.0 - w) * omega_kin;

        psi = wrap_angle(psi + h * omega);
        let (sin_psi, cos_psi) = psi.sin_cos();
        px += h * (vx * cos_psi - vy * sin_psi);
        py += h * (vx * sin_psi + vy * cos_psi);
    }

    let next = State {
        px,
        py,
        psi,
        vx,
        vy,
        omega,
    };
    next.validate()?;
    Ok(next)
}

/// Roll the model forward through a commanded action sequence.
///
/// The returned trajectory records the commanded actions; the actuators see
/// each command `actuator_latency_steps` periods later, with the latency
/// queue initialized to zero actions.
pub fn rollout(
    x0: &State,
    actions: &[Action],
    params: &VehicleParams,
    cfg: &SimConfig,
) -> Result<Trajectory, SimError> {
    let mut states = Vec::with_capacity(actions.len() + 1);
    states.push(*x0);
    let mut queue = std::collections::VecDeque::with_capacity(params.actuator_latency_steps as usize + 1);
    for _ in 0..params.actuator_latency_steps {
        queue.push_back(Action::zero());
    }
    let mut current = *x0;
    for (step, action) in actions.iter().enumerate() {
        queue.push_back(*action);
        let applied = queue.pop_front().expect("queue holds at least the pushed action");
        current = dbm_step(&current, &applied, params, cfg)
            .map_err(|e| SimError::at_step(step, e))?;
        states.push(current);
    }
    Ok(Trajectory::new(states, actions.to_vec(), 0))
}
