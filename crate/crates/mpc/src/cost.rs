//! Tracking cost: a weighted sum of squared position error, wrapped
//! absolute heading error, absolute longitudinal-speed error, and the
//! action-increment norm. Lower is better; the planner minimizes it.

use simcar::{wrap_angle, Action, State};

use crate::config::RewardWeights;

/// One reference sample along the track at a fixed future time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefPoint {
    pub px: f64,
    pub py: f64,
    /// Track heading at this point (direction of travel).
    pub psi: f64,
    /// Target longitudinal speed.
    pub speed: f64,
}

/// Per-step cost of being at `x` while commanding `a`, measured against a
/// reference point; `prev` is the previously commanded action.
pub fn step_cost(x: &State, a: Action, r: &RefPoint, prev: Action, w: &RewardWeights) -> f64 {
    let dp2 = (x.px - r.px).powi(2) + (x.py - r.py).powi(2);
    let dpsi = wrap_angle(x.psi - r.psi).abs();
    let dv = (x.vx - r.speed).abs();
    let da = ((a.throttle() - prev.throttle()).powi(2) + (a.steer() - prev.steer()).powi(2)).sqrt();
    w.pos * dp2 + w.heading * dpsi + w.speed * dv + w.effort * da
}

/// Total cost of one rollout: `states[t]` is the prediction after applying
/// `actions[t]`, compared against `refs[t]`. Any non-finite contribution
/// makes the whole rollout infinitely expensive, so NaN predictions can
/// never win the softmax.
pub fn rollout_cost(
    states: &[State],
    actions: &[Action],
    refs: &[RefPoint],
    prev: Action,
    w: &RewardWeights,
) -> f64 {
    debug_assert_eq!(states.len(), actions.len());
    debug_assert_eq!(states.len(), refs.len());
    let mut total = 0.0f64;
    let mut last = prev;
    for ((x, a), r) in states.iter().zip(actions).zip(refs) {
        total += step_cost(x, *a, r, last, w);
        last = *a;
    }
    if total.is_finite() {
        total
    } else {
        f64::INFINITY
    }
}
