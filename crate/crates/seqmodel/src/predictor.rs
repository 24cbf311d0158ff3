//! The prediction interface the sampling controller plans against, plus
//! two reference implementations: the exact simulator (an oracle with the
//! true vehicle parameters) and a trivial hold-the-anchor predictor.

use std::collections::VecDeque;

use simcar::{dbm_step, Action, SimConfig, State, VehicleParams, WindowSample};

use crate::error::ModelError;
use crate::model::DynamicsModel;

/// Batched multi-step dynamics prediction from an estimated state history.
pub trait Predictor {
    /// States the predictor consumes per history (K+1).
    fn history_len(&self) -> usize;

    /// Steps predicted per rollout.
    fn horizon(&self) -> usize;

    /// Roll out every candidate action sequence from one shared history.
    /// `hist_states` holds up to `history_len()` states, newest last;
    /// `hist_actions` has one fewer. Each returned rollout has
    /// `horizon()` states.
    fn predict_shared(
        &self,
        hist_states: &[State],
        hist_actions: &[Action],
        seqs: &[Vec<Action>],
    ) -> Result<Vec<Vec<State>>, ModelError>;

    /// Roll out each window independently (offline evaluation).
    fn predict_each(&self, windows: &[WindowSample]) -> Result<Vec<Vec<State>>, ModelError>;
}

impl Predictor for DynamicsModel {
    fn history_len(&self) -> usize {
        self.cfg().hist_states()
    }

    fn horizon(&self) -> usize {
        self.cfg().horizon
    }

    fn predict_shared(
        &self,
        hist_states: &[State],
        hist_actions: &[Action],
        seqs: &[Vec<Action>],
    ) -> Result<Vec<Vec<State>>, ModelError> {
        DynamicsModel::predict_shared(self, hist_states, hist_actions, seqs)
    }

    fn predict_each(&self, windows: &[WindowSample]) -> Result<Vec<Vec<State>>, ModelError> {
        DynamicsModel::predict_each(self, windows)
    }
}

/// Exact-model oracle: integrates the true vehicle with the simulator's
/// own stepper. The actuator latency queue is primed from the tail of the
/// action history, exactly as the plant would realize pending commands.
#[derive(Debug, Clone)]
pub struct DbmPredictor {
    pub params: VehicleParams,
    pub sim: SimConfig,
    pub k_hist: usize,
    pub horizon: usize,
}

impl DbmPredictor {
    fn roll(
        &self,
        x0: &State,
        hist_actions: &[Action],
        seq: &[Action],
    ) -> Result<Vec<State>, ModelError> {
        let lat = self.params.actuator_latency_steps as usize;
        let mut queue: VecDeque<Action> = VecDeque::with_capacity(lat + 1);
        for i in 0..lat {
            let idx = hist_actions.len() as i64 - lat as i64 + i as i64;
            queue.push_back(if idx >= 0 {
                hist_actions[idx as usize]
            } else {
                Action::zero()
            });
        }
        let mut current = *x0;
        let mut out = Vec::with_capacity(self.horizon);
        for a in seq.iter().take(self.horizon) {
            queue.push_back(*a);
            let applied = queue.pop_front().expect("queue holds the pushed action");
            current = dbm_step(&current, &applied, &self.params, &self.sim)?;
            out.push(current);
        }
        Ok(out)
    }
}

impl Predictor for DbmPredictor {
    fn history_len(&self) -> usize {
        self.k_hist + 1
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict_shared(
        &self,
        hist_states: &[State],
        hist_actions: &[Action],
        seqs: &[Vec<Action>],
    ) -> Result<Vec<Vec<State>>, ModelError> {
        let x0 = hist_states.last().ok_or(ModelError::EmptyDataset("history"))?;
        seqs.iter().map(|s| self.roll(x0, hist_actions, s)).collect()
    }

    fn predict_each(&self, windows: &[WindowSample]) -> Result<Vec<Vec<State>>, ModelError> {
        windows
            .iter()
            .map(|w| {
                // The oracle integrates from the true anchor state; its
                // history inputs are otherwise unused.
                self.roll(&w.anchor_truth, &w.hist_actions, &w.future_actions)
            })
            .collect()
    }
}

/// Trivial baseline: every future state equals the newest history state.
#[derive(Debug, Clone)]
pub struct ZeroDeltaPredictor {
    pub k_hist: usize,
    pub horizon: usize,
}

impl Predictor for ZeroDeltaPredictor {
    fn history_len(&self) -> usize {
        self.k_hist + 1
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn predict_shared(
        &self,
        hist_states: &[State],
        _hist_actions: &[Action],
        seqs: &[Vec<Action>],
    ) -> Result<Vec<Vec<State>>, ModelError> {
        let x0 = *hist_states.last().ok_or(ModelError::EmptyDataset("history"))?;
        Ok(seqs.iter().map(|_| vec![x0; self.horizon]).collect())
    }

    fn predict_each(&self, windows: &[WindowSample]) -> Result<Vec<Vec<State>>, ModelError> {
        Ok(windows
            .iter()
            .map(|w| {
                let x0 = *w.hist_states.last().expect("windows hold K+1 states");
                vec![x0; self.horizon]
            })
            .collect())
    }
}
