use serde::{Deserialize, Serialize};

use crate::state::{Action, State};

/// One episode: states, the commanded actions between them, and optionally a
/// parallel sequence of degraded state estimates. `params_id` refers into
/// the owning dataset's parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub actions: Vec<Action>,
    pub params_id: u64,
    pub estimated_states: Option<Vec<State>>,
}

impl Trajectory {
    pub fn new(states: Vec<State>, actions: Vec<Action>, params_id: u64) -> Self {
        debug_assert_eq!(states.len(), actions.len() + 1);
        Trajectory {
            states,
            actions,
            params_id,
            estimated_states: None,
        }
    }

    /// Number of transitions (= actions). States count is `len() + 1`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Structural consistency: lengths line up and every value is finite.
    pub fn check(&self) -> Result<(), crate::error::SimError> {
        if self.states.len() != self.actions.len() + 1 {
            return Err(crate::error::SimError::BadConfig(format!(
                "trajectory has {} states for {} actions",
                self.states.len(),
                self.actions.len()
            )));
        }
        if let Some(est) = &self.estimated_states {
            if est.len() != self.states.len() {
                return Err(crate::error::SimError::BadConfig(format!(
                    "estimated states length {} != states length {}",
                    est.len(),
                    self.states.len()
                )));
            }
            for s in est {
                s.validate()?;
            }
        }
        for s in &self.states {
            s.validate()?;
        }
        for a in &self.actions {
            a.validate()?;
        }
        Ok(())
    }
}

/// One training window cut from a trajectory.
///
/// Histories come from the estimated states when the trajectory carries
/// them (the model must learn from degraded inputs), ground truth otherwise.
/// `future_states` are always ground truth: they are the prediction target.
/// `anchor_truth` is the ground-truth state at the anchor index `t`; when no
/// estimator is attached it equals the last history state. It exists so
/// training targets can be expressed relative to the true anchor pose
/// without absorbing the estimator's absolute drift.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub hist_states: Vec<State>,
    pub hist_actions: Vec<Action>,
    pub future_actions: Vec<Action>,
    pub future_states: Vec<State>,
    pub anchor_truth: State,
}

impl WindowSample {
    pub fn check(&self, k: usize, h: usize) -> bool {
        self.hist_states.len() == k + 1
            && self.hist_actions.len() == k
            && self.future_actions.len() == h
            && self.future_states.len() == h
    }
}

/// Cut overlapping windows with `K+1` history states, `K` history actions,
/// and `H` future actions/states, advancing the anchor by `stride`.
///
/// A trajectory shorter than `K + H` transitions yields no windows; that is
/// not an error, short episodes simply contribute nothing.
pub fn slice_windows(traj: &Trajectory, k: usize, h: usize, stride: usize) -> Vec<WindowSample> {
    assert!(stride > 0, "stride must be positive");
    assert!(h > 0, "horizon must be positive");
    let n = traj.len();
    if n < k + h {
        return Vec::new();
    }
    let hist_source: &[State] = traj
        .estimated_states
        .as_deref()
        .unwrap_or(&traj.states);
    let count = (n - k - h) / stride + 1;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let t = k + i * stride;
        out.push(WindowSample {
            hist_states: hist_source[t - k..=t].to_vec(),
            hist_actions: traj.actions[t - k..t].to_vec(),
            future_actions: traj.actions[t..t + h].to_vec(),
            future_states: traj.states[t + 1..=t + h].to_vec(),
            anchor_truth: traj.states[t],
        });
    }
    out
}
