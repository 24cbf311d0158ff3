//! Helpers shared by the integration tests.
#![allow(dead_code)] // each test binary uses its own subset

use seqmodel::{Arch, ModelConfig, Tensor};
use simcar::{Action, State, WindowSample};

pub fn st(px: f64, py: f64, psi: f64, vx: f64, vy: f64, omega: f64) -> State {
    State::new(px, py, psi, vx, vy, omega)
}

/// Hand-built two-state window (history `x0, x1`, one action, horizon 2)
/// used by the frozen end-to-end reference predictions.
pub fn tiny_window() -> WindowSample {
    let x0 = st(1.5, 2.5, 1.2, 1.4, -0.1, 0.2);
    let x1 = st(1.0, 2.0, 0.7, 1.2, -0.3, 0.4);
    WindowSample {
        hist_states: vec![x0, x1],
        hist_actions: vec![Action::new(0.5, -0.3)],
        future_actions: vec![Action::new(0.8, 0.1), Action::new(-0.2, -0.05)],
        future_states: vec![x1, x1],
        anchor_truth: x1,
    }
}

/// Small config matching `tiny_window`: one history transition, horizon 2.
pub fn tiny_cfg(arch: Arch, hidden: usize) -> ModelConfig {
    ModelConfig {
        arch,
        k_hist: 1,
        horizon: 2,
        n_layers: 1,
        hidden,
        ..ModelConfig::default()
    }
}

/// Overwrite a tensor from an index pattern `f(row, col)`.
pub fn fill(t: &mut Tensor, f: impl Fn(usize, usize) -> f32) {
    let shape = t.shape().to_vec();
    let (r, c) = (shape[0], shape[1]);
    let d = t.data_mut();
    for i in 0..r {
        for j in 0..c {
            d[i * c + j] = f(i, j);
        }
    }
}

pub fn assert_state_close(got: &State, want: &[f64; 6], tol: f64, what: &str) {
    let g = got.to_array();
    for (k, (gv, wv)) in g.iter().zip(want.iter()).enumerate() {
        assert!(
            (gv - wv).abs() <= tol,
            "{what}: state component {k}: got {gv}, want {wv}"
        );
    }
}

/// Exact equality of two states, component-wise (f64 bit-identical values).
pub fn assert_state_eq(got: &State, want: &State, what: &str) {
    let (g, w) = (got.to_array(), want.to_array());
    for k in 0..6 {
        assert!(
            g[k] == w[k],
            "{what}: state component {k}: got {}, want {} (exact)",
            g[k],
            w[k]
        );
    }
}
