//! Anchor-frame state representation and normalization statistics.
//!
//! Raw world coordinates would let a model memorize the track, so every
//! window is re-expressed relative to its newest history state (the
//! "anchor"): positions are rotated into the anchor frame, headings become
//! wrapped deltas. Input features keep absolute body-frame velocities (the
//! model must know how fast the car is going); target features use velocity
//! deltas as well, so an all-zero prediction decodes to "the anchor state,
//! repeated" — the natural rest point of a zero-initialized output head.
//! The representation makes predictions equivariant to planar rigid
//! transforms of the world frame.

use serde::{Deserialize, Serialize};
use simcar::{wrap_angle, Action, State, WindowSample};

use crate::error::ModelError;

pub const STATE_DIM: usize = 6;
pub const ACT_DIM: usize = 2;

/// Anchor-relative input feature of a history state.
/// `[dpx, dpy, dpsi, vx, vy, omega]` with the position delta rotated into
/// the anchor frame and the heading wrapped; velocities pass through.
pub fn rel_input(x: &State, anchor: &State) -> [f64; STATE_DIM] {
    let (s, c) = anchor.psi.sin_cos();
    let dx = x.px - anchor.px;
    let dy = x.py - anchor.py;
    [
        c * dx + s * dy,
        -s * dx + c * dy,
        wrap_angle(x.psi - anchor.psi),
        x.vx,
        x.vy,
        x.omega,
    ]
}

/// Anchor-relative target feature of a future state: like `rel_input` but
/// with velocities as deltas against the anchor, so the zero vector decodes
/// to the anchor state itself.
pub fn rel_target(x: &State, anchor: &State) -> [f64; STATE_DIM] {
    let mut f = rel_input(x, anchor);
    f[3] = x.vx - anchor.vx;
    f[4] = x.vy - anchor.vy;
    f[5] = x.omega - anchor.omega;
    f
}

/// Map a target feature back to a world state by composing with the anchor.
pub fn compose(anchor: &State, rel: &[f64; STATE_DIM]) -> State {
    let (s, c) = anchor.psi.sin_cos();
    State {
        px: anchor.px + c * rel[0] - s * rel[1],
        py: anchor.py + s * rel[0] + c * rel[1],
        psi: wrap_angle(anchor.psi + rel[2]),
        vx: anchor.vx + rel[3],
        vy: anchor.vy + rel[4],
        omega: anchor.omega + rel[5],
    }
}

/// Per-dimension normalization statistics, computed from the training split
/// only. Input states and actions are z-scored (mean and std); target
/// features are scaled by std alone so that a zero normalized prediction is
/// exactly a zero state delta.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub state_mean: [f64; STATE_DIM],
    pub state_std: [f64; STATE_DIM],
    pub act_mean: [f64; ACT_DIM],
    pub act_std: [f64; ACT_DIM],
    pub target_std: [f64; STATE_DIM],
}

/// Smallest admissible std: keeps z-scores finite on degenerate dimensions
/// (e.g. lateral velocity in straight-line data) without exploding them.
pub const STD_FLOOR: f64 = 1e-4;

impl NormStats {
    /// Identity statistics (zero mean, unit std) for tests and raw models.
    pub fn identity() -> Self {
        NormStats {
            state_mean: [0.0; STATE_DIM],
            state_std: [1.0; STATE_DIM],
            act_mean: [0.0; ACT_DIM],
            act_std: [1.0; ACT_DIM],
            target_std: [1.0; STATE_DIM],
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all = self
            .state_mean
            .iter()
            .chain(&self.state_std)
            .chain(&self.act_mean)
            .chain(&self.act_std)
            .chain(&self.target_std);
        for v in all {
            if !v.is_finite() {
                return Err(ModelError::NonFinite {
                    what: "normalization statistics",
                });
            }
        }
        let stds = self.state_std.iter().chain(&self.act_std).chain(&self.target_std);
        for s in stds {
            if *s <= 0.0 {
                return Err(ModelError::Config(format!(
                    "normalization std must be positive, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Compute statistics over the anchor-frame features of `windows`.
    pub fn from_windows(windows: &[WindowSample]) -> Result<Self, ModelError> {
        if windows.is_empty() {
            return Err(ModelError::EmptyDataset("training"));
        }
        let mut st = Acc::<STATE_DIM>::new();
        let mut ac = Acc::<ACT_DIM>::new();
        let mut tg = Acc::<STATE_DIM>::new();
        for w in windows {
            let anchor = w.hist_states.last().expect("window history is non-empty");
            for x in &w.hist_states {
                st.push(&rel_input(x, anchor));
            }
            for a in &w.hist_actions {
                ac.push(&[a.throttle(), a.steer()]);
            }
            for x in &w.future_states {
                tg.push(&rel_target(x, &w.anchor_truth));
            }
        }
        let (state_mean, state_std) = st.finish();
        let (act_mean, act_std) = ac.finish();
        let (_, target_std) = tg.finish();
        let stats = NormStats {
            state_mean,
            state_std,
            act_mean,
            act_std,
            target_std,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn norm_state(&self, feat: &[f64; STATE_DIM]) -> [f32; STATE_DIM] {
        std::array::from_fn(|i| ((feat[i] - self.state_mean[i]) / self.state_std[i]) as f32)
    }

    pub fn norm_action(&self, a: &Action) -> [f32; ACT_DIM] {
        let raw = [a.throttle(), a.steer()];
        std::array::from_fn(|i| ((raw[i] - self.act_mean[i]) / self.act_std[i]) as f32)
    }

    pub fn norm_target(&self, feat: &[f64; STATE_DIM]) -> [f32; STATE_DIM] {
        std::array::from_fn(|i| (feat[i] / self.target_std[i]) as f32)
    }

    /// Invert `norm_target` and compose with the anchor state.
    pub fn denorm_target(&self, anchor: &State, z: &[f32; STATE_DIM]) -> State {
        let rel: [f64; STATE_DIM] = std::array::from_fn(|i| z[i] as f64 * self.target_std[i]);
        compose(anchor, &rel)
    }
}

/// Streaming mean/std accumulator over fixed-width features.
struct Acc<const D: usize> {
    n: u64,
    sum: [f64; D],
    sumsq: [f64; D],
}

impl<const D: usize> Acc<D> {
    fn new() -> Self {
        Acc {
            n: 0,
            sum: [0.0; D],
            sumsq: [0.0; D],
        }
    }

    fn push(&mut self, v: &[f64; D]) {
        self.n += 1;
        for (i, &x) in v.iter().enumerate() {
            self.sum[i] += x;
            self.sumsq[i] += x * x;
        }
    }

    fn finish(self) -> ([f64; D], [f64; D]) {
        let n = (self.n.max(1)) as f64;
        let mean = std::array::from_fn(|i| self.sum[i] / n);
        let std = std::array::from_fn(|i| {
            let var = (self.sumsq[i] / n - mean[i] * mean[i]).max(0.0);
            var.sqrt().max(STD_FLOOR)
        });
        (mean, std)
    }
}
