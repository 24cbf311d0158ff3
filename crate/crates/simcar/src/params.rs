use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::state::STEER_HARD_LIMIT;

/// Default friction multiplier for the low-grip wheel swap.
pub const PLASTIC_FACTOR_DEFAULT: f64 = 0.5;
/// Default linear drag added by a towed box, N s/m.
pub const TOW_DRAG_DEFAULT: f64 = 0.4;
/// Default towed-box mass as a fraction of the unloaded chassis mass.
pub const TOW_MASS_FRACTION_DEFAULT: f64 = 0.2;
/// Default payload as a fraction of the unloaded chassis mass.
pub const PAYLOAD_FRACTION_DEFAULT: f64 = 0.4;

/// Physical description of one vehicle in the randomized fleet.
///
/// Units are SI throughout: kg, m, N/rad. `cf`/`cr` are linear cornering
/// stiffnesses; `friction_f`/`friction_r` cap each axle's lateral force at
/// `mu * Fz`. `drag_coeff` and `tow_drag` are linear drag gains (N s/m);
/// `rolling_resistance` is a constant force (N). `tow_drag` and
/// `payload_mass` are zero for a nominal vehicle and become nonzero only
/// through [`apply_perturbation`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub mass: f64,
    pub yaw_inertia: f64,
    /// Distance from center of mass to the front axle.
    pub lf: f64,
    /// Distance from center of mass to the rear axle.
    pub lr: f64,
    pub cf: f64,
    pub cr: f64,
    pub friction_f: f64,
    pub friction_r: f64,
    /// Peak longitudinal acceleration of the unloaded chassis at full throttle.
    pub max_accel: f64,
    pub drag_coeff: f64,
    pub rolling_resistance: f64,
    pub delta_max: f64,
    pub actuator_latency_steps: u32,
    pub tow_drag: f64,
    pub payload_mass: f64,
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive: [(f64, &'static str); 8] = [
            (self.mass, "mass"),
            (self.yaw_inertia, "yaw_inertia"),
            (self.lf, "lf"),
            (self.lr, "lr"),
            (self.cf, "cf"),
            (self.cr, "cr"),
            (self.friction_f, "friction_f"),
            (self.friction_r, "friction_r"),
        ];
        for (value, field) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::BadParam {
                    field,
                    reason: format!("must be finite and positive, got {value}"),
                });
            }
        }
        for (value, field) in [
            (self.friction_f, "friction_f"),
            (self.friction_r, "friction_r"),
        ] {
            if value > 2.0 {
                return Err(SimError::BadParam {
                    field,
                    reason: format!("friction coefficient capped at 2.0, got {value}"),
                });
            }
        }
        let nonneg: [(f64, &'static str); 4] = [
            (self.max_accel, "max_accel"),
            (self.drag_coeff, "drag_coeff"),
            (self.rolling_resistance, "rolling_resistance"),
            (self.tow_drag, "tow_drag"),
        ];
        for (value, field) in nonneg {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SimError::BadParam {
                    field,
                    reason: format!("must be finite and non-negative, got {value}"),
                });
            }
        }
        if !(self.payload_mass.is_finite() && self.payload_mass >= 0.0) {
            return Err(SimError::BadParam {
                field: "payload_mass",
                reason: format!("must be finite and non-negative, got {}", self.payload_mass),
            });
        }
        if !(self.delta_max.is_finite()
            && self.delta_max > 0.0
            && self.delta_max <= STEER_HARD_LIMIT)
        {
            return Err(SimError::BadParam {
                field: "delta_max",
                reason: format!(
                    "must lie in (0, {STEER_HARD_LIMIT}], got {}",
                    self.delta_max
                ),
            });
        }
        if self.actuator_latency_steps > 10 {
            return Err(SimError::BadParam {
                field: "actuator_latency_steps",
                reason: format!("at most 10 supported, got {}", self.actuator_latency_steps),
            });
        }
        Ok(())
    }

    /// Front-to-rear axle distance.
    pub fn wheelbase(&self) -> f64 {
        self.lf + self.lr
    }

    /// Chassis plus payload.
    pub fn total_mass(&self) -> f64 {
        self.mass + self.payload_mass
    }

    /// Yaw inertia scaled with the mass ratio; a payload strapped to the
    /// chassis adds inertia roughly in proportion to the mass it adds.
    pub fn total_yaw_inertia(&self) -> f64 {
        self.yaw_inertia * self.total_mass() / self.mass
    }

    /// A mid-range reference vehicle used by tests and as a config default.
    pub fn nominal() -> Self {
        VehicleParams {
            mass: 2.5,
            yaw_inertia: 0.045,
            lf: 0.16,
            lr: 0.17,
            cf: 35.0,
            cr: 40.0,
            friction_f: 0.8,
            friction_r: 0.8,
            max_accel: 4.0,
            drag_coeff: 0.08,
            rolling_resistance: 0.12,
            delta_max: 0.45,
            actuator_latency_steps: 0,
            tow_drag: 0.0,
            payload_mass: 0.0,
        }
    }
}

/// Sampling ranges for [`randomize_vehicle`]. Scale-like quantities (mass,
/// inertia, stiffness) are drawn log-uniformly so small and large vehicles
/// are equally represented; geometry and friction are drawn uniformly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ParamRanges {
    pub mass: (f64, f64),
    pub yaw_inertia: (f64, f64),
    pub lf: (f64, f64),
    pub lr: (f64, f64),
    pub stiffness: (f64, f64),
    pub friction: (f64, f64),
    pub max_accel: (f64, f64),
    pub drag_coeff: (f64, f64),
    pub rolling_resistance: (f64, f64),
    pub delta_max: (f64, f64),
    pub latency_steps: (u32, u32),
}

impl Default for ParamRanges {
    fn default() -> Self {
        ParamRanges {
            mass: (1.0, 6.0),
            yaw_inertia: (0.01, 0.2),
            lf: (0.1, 0.25),
            lr: (0.1, 0.25),
            stiffness: (10.0, 80.0),
            friction: (0.3, 1.2),
            max_accel: (2.0, 8.0),
            drag_coeff: (0.0, 0.3),
            rolling_resistance: (0.0, 0.5),
            delta_max: (0.3, 0.6),
            latency_steps: (0, 4),
        }
    }
}

impl ParamRanges {
    pub fn validate(&self) -> Result<(), SimError> {
        let ordered: [((f64, f64), &'static str); 10] = [
            (self.mass, "mass"),
            (self.yaw_inertia, "yaw_inertia"),
            (self.lf, "lf"),
            (self.lr, "lr"),
            (self.stiffness, "stiffness"),
            (self.friction, "friction"),
            (self.max_accel, "max_accel"),
            (self.drag_coeff, "drag_coeff"),
            (self.rolling_resistance, "rolling_resistance"),
            (self.delta_max, "delta_max"),
        ];
        for ((lo, hi), field) in ordered {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(SimError::BadParam {
                    field,
                    reason: format!("range ({lo}, {hi}) is not ordered and finite"),
                });
            }
        }
        for ((lo, _), field) in [
            (self.mass, "mass"),
            (self.yaw_inertia, "yaw_inertia"),
            (self.stiffness, "stiffness"),
        ] {
            if lo <= 0.0 {
                return Err(SimError::BadParam {
                    field,
                    reason: "log-uniform range needs a positive lower bound".into(),
                });
            }
        }
        if self.latency_steps.0 > self.latency_steps.1 || self.latency_steps.1 > 10 {
            return Err(SimError::BadParam {
                field: "latency_steps",
                reason: format!("range {:?} must be ordered with max 10", self.latency_steps),
            });
        }
        Ok(())
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..=hi.ln())).exp()
}

fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo..=hi)
}

/// Draw one vehicle from the fleet distribution. Both axles share one drawn
/// friction coefficient; per-axle splits arise only from perturbations.
pub fn randomize_vehicle<R: Rng>(rng: &mut R, ranges: &ParamRanges) -> Result<VehicleParams, SimError> {
    ranges.validate()?;
    let friction = uniform(rng, ranges.friction.0, ranges.friction.1);
    let params = VehicleParams {
        mass: log_uniform(rng, ranges.mass.0, ranges.mass.1),
        yaw_inertia: log_uniform(rng, ranges.yaw_inertia.0, ranges.yaw_inertia.1),
        lf: uniform(rng, ranges.lf.0, ranges.lf.1),
        lr: uniform(rng, ranges.lr.0, ranges.lr.1),
        cf: log_uniform(rng, ranges.stiffness.0, ranges.stiffness.1),
        cr: log_uniform(rng, ranges.stiffness.0, ranges.stiffness.1),
        friction_f: friction,
        friction_r: friction,
        max_accel: uniform(rng, ranges.max_accel.0, ranges.max_accel.1),
        drag_coeff: uniform(rng, ranges.drag_coeff.0, ranges.drag_coeff.1),
        rolling_resistance: uniform(rng, ranges.rolling_resistance.0, ranges.rolling_resistance.1),
        delta_max: uniform(rng, ranges.delta_max.0, ranges.delta_max.1),
        actuator_latency_steps: rng.gen_range(ranges.latency_steps.0..=ranges.latency_steps.1),
        tow_drag: 0.0,
        payload_mass: 0.0,
    };
    params.validate()?;
    Ok(params)
}

/// Structured mid-episode changes used to stress adaptation. Each variant
/// maps onto the physical fields it touches; magnitudes are explicit so
/// studies can sweep them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Drag a box behind the car: adds linear drag plus the box's mass.
    TowBox { drag: f64, mass: f64 },
    /// Strap extra mass to the chassis; also scales yaw inertia through
    /// [`VehicleParams::total_yaw_inertia`] and leaves motor force unchanged,
    /// so acceleration degrades.
    Payload { mass: f64 },
    /// Swap front tires for low-grip plastic: scales front friction.
    PlasticWheelsFront { factor: f64 },
    /// Swap all four tires.
    PlasticWheelsAll { factor: f64 },
}

impl Perturbation {
    pub fn tow_box_default_for(params: &VehicleParams) -> Self {
        Perturbation::TowBox {
            drag: TOW_DRAG_DEFAULT,
            mass: TOW_MASS_FRACTION_DEFAULT * params.mass,
        }
    }

    pub fn payload_default_for(params: &VehicleParams) -> Self {
        Perturbation::Payload {
            mass: PAYLOAD_FRACTION_DEFAULT * params.mass,
        }
    }

    pub fn plastic_front_default() -> Self {
        Perturbation::PlasticWheelsFront {
            factor: PLASTIC_FACTOR_DEFAULT,
        }
    }

    pub fn plastic_all_default() -> Self {
        Perturbation::PlasticWheelsAll {
            factor: PLASTIC_FACTOR_DEFAULT,
        }
    }
}

/// Apply a perturbation, returning the modified copy. The input is not
/// mutated so a scenario can branch nominal and perturbed runs from one draw.
pub fn apply_perturbation(
    params: &VehicleParams,
    perturbation: Perturbation,
) -> Result<VehicleParams, SimError> {
    let mut out = *params;
    match perturbation {
        Perturbation::TowBox { drag, mass } => {
            if !(drag.is_finite() && drag >= 0.0) {
                return Err(SimError::BadConfig(format!("tow drag {drag} must be >= 0")));
            }
            if !(mass.is_finite() && mass >= 0.0) {
                return Err(SimError::BadConfig(format!("tow mass {mass} must be >= 0")));
            }
            out.tow_drag += drag;
            out.payload_mass += mass;
        }
        Perturbation::Payload { mass } => {
            if !(mass.is_finite() && mass >= 0.0) {
                return Err(SimError::BadConfig(format!(
                    "payload mass {mass} must be >= 0"
                )));
            }
            out.payload_mass += mass;
        }
        Perturbation::PlasticWheelsFront { factor } => {
            if !(factor.is_finite() && factor > 0.0 && factor <= 1.0) {
                return Err(SimError::BadConfig(format!(
                    "friction factor {factor} must lie in (0, 1]"
                )));
            }
            out.friction_f *= factor;
        }
        Perturbation::PlasticWheelsAll { factor } => {
            if !(factor.is_finite() && factor > 0.0 && factor <= 1.0) {
                return Err(SimError::BadConfig(format!(
                    "friction factor {factor} must lie in (0, 1]"
                )));
            }
            out.friction_f *= factor;
            out.friction_r *= factor;
        }
    }
    out.validate()?;
    Ok(out)
}
