use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::dataset::{Dataset, Policy};
use crate::dbm::{dbm_step, SimConfig};
use crate::error::SimError;
use crate::params::{randomize_vehicle, ParamRanges, VehicleParams};
use crate::pursuit::{pd_throttle, pure_pursuit_steer, PdGains};
use crate::state::{Action, State};
use crate::track::{synthesize_track, ReferenceTrack, TrackConfig};
use crate::trajectory::Trajectory;

/// Why an episode stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeEnd {
    /// Hit the step budget (closed tracks run laps until then).
    StepLimit,
    /// Reached the final waypoint of an open track.
    Completed,
    /// Lateral error exceeded the divergence threshold.
    Diverged,
    /// The controller asked to stop.
    Aborted,
}

/// Verdict a controller can attach to its action.
pub enum ControlFlow {
    Continue(Action),
    Stop,
}

/// Drive one episode. The controller sees the true state (collection is
/// mocap-grade; estimator degradation is applied as a separate pass), the
/// actuators see each command `actuator_latency_steps` later via the zero-
/// initialized queue, and the trajectory records commanded actions.
pub fn run_episode<C>(
    start: &State,
    params: &VehicleParams,
    track: &ReferenceTrack,
    sim: &SimConfig,
    max_steps: usize,
    divergence_threshold: f64,
    mut controller: C,
) -> Result<(Trajectory, EpisodeEnd), SimError>
where
    C: FnMut(&State, usize) -> ControlFlow,
{
    let mut states = vec![*start];
    let mut actions = Vec::new();
    let mut queue: VecDeque<Action> = VecDeque::new();
    for _ in 0..params.actuator_latency_steps {
        queue.push_back(Action::zero());
    }
    let mut current = *start;
    let mut end = EpisodeEnd::StepLimit;
    for step in 0..max_steps {
        let command = match controller(&current, step) {
            ControlFlow::Continue(a) => a,
            ControlFlow::Stop => {
                end = EpisodeEnd::Aborted;
                break;
            }
        };
        queue.push_back(command);
        let applied = queue.pop_front().expect("queue holds the pushed command");
        current = dbm_step(&current, &applied, params, sim)
            .map_err(|e| SimError::at_step(step, e))?;
        states.push(current);
        actions.push(command);

        if track.lateral_error(&current).abs() > divergence_threshold {
            end = EpisodeEnd::Diverged;
            break;
        }
        if !track.closed {
            let nearest = track.nearest_index(current.px, current.py);
            if nearest + 1 >= track.len() {
                end = EpisodeEnd::Completed;
                break;
            }
        }
    }
    Ok((Trajectory::new(states, actions, 0), end))
}

/// Pure-pursuit plus PD speed regulation as a reusable controller closure.
/// Tracks its own previous speed for the derivative term.
pub struct PursuitController {
    gains: PdGains,
    lookahead: f64,
    dt: f64,
    prev_vx: Option<f64>,
}

impl PursuitController {
    pub fn new(gains: PdGains, lookahead: f64, dt: f64) -> Self {
        PursuitController {
            gains,
            lookahead,
            dt,
            prev_vx: None,
        }
    }

    pub fn act(
        &mut self,
        state: &State,
        track: &ReferenceTrack,
        params: &VehicleParams,
    ) -> Result<Action, SimError> {
        let steer = pure_pursuit_steer(state, track, self.lookahead, params.wheelbase(), params.delta_max)?;
        let accel = match self.prev_vx {
            Some(prev) => (state.vx - prev) / self.dt,
            None => 0.0,
        };
        self.prev_vx = Some(state.vx);
        let nearest = track.nearest_index(state.px, state.py);
        let target = track.target_speed(nearest);
        let throttle = pd_throttle(state.vx, target, &self.gains, accel);
        Ok(Action::clamped_to(throttle, steer, params.delta_max))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Stage1Config {
    pub n_steps: usize,
    pub ranges: ParamRanges,
    pub track: TrackConfig,
    pub sim: SimConfig,
    pub gains: PdGains,
    pub lookahead: f64,
    pub max_episode_steps: usize,
    /// Episodes shorter than this are discarded as persistent divergence.
    pub min_episode_steps: usize,
    pub divergence_threshold: f64,
}

impl Stage1Config {
    pub fn with_defaults(n_steps: usize, sim: SimConfig) -> Self {
        Stage1Config {
            n_steps,
            ranges: ParamRanges::default(),
            track: TrackConfig::default(),
            sim,
            gains: PdGains::default(),
            lookahead: 0.6,
            max_episode_steps: 1200,
            min_episode_steps: 100,
            divergence_threshold: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct CollectStats {
    pub episodes: usize,
    pub skipped: usize,
    pub diverged: usize,
    pub total_steps: usize,
}

/// Derive a per-episode seed from the master seed (splitmix64 step), so an
/// episode's randomness does not depend on how long earlier episodes ran.
pub fn episode_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Warm-up collection: random vehicle on random track driven by pure
/// pursuit + PD, episode after episode until `n_steps` total transitions.
/// Divergent episodes shorter than the minimum are skipped (new vehicle),
/// never fatal.
pub fn collect_stage1(master_seed: u64, cfg: &Stage1Config) -> Result<(Dataset, CollectStats), SimError> {
    if cfg.n_steps == 0 {
        return Err(SimError::BadConfig("n_steps must be > 0".into()));
    }
    cfg.gains.validate()?;
    let mut ds = Dataset::new(cfg.sim.dt, master_seed);
    let mut stats = CollectStats::default();
    let mut episode_index = 0u64;
    // Skips still consume an episode index, so a pathological vehicle does
    // not stall the sequence; cap attempts to keep worst-case bounded.
    let max_attempts = 64 * (cfg.n_steps / cfg.min_episode_steps.max(1) + 16) as u64;
    while ds.total_steps() < cfg.n_steps {
        if episode_index >= max_attempts {
            return Err(SimError::BadConfig(format!(
                "collection stalled: {} of {} steps after {episode_index} episodes",
                ds.total_steps(),
                cfg.n_steps
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed(master_seed, episode_index));
        episode_index += 1;
        let params = randomize_vehicle(&mut rng, &cfg.ranges)?;
        // Target speeds must be feasible for the drawn vehicle: cap the
        // track's assumed grip slightly below the car's weakest axle.
        let mut track_cfg = cfg.track;
        track_cfg.friction = track_cfg
            .friction
            .min(0.9 * params.friction_f.min(params.friction_r));
        let track = synthesize_track(&mut rng, &track_cfg)?;
        let mut controller = PursuitController::new(cfg.gains, cfg.lookahead, cfg.sim.dt);
        let start = track.start_state();
        let (traj, end) = run_episode(
            &start,
            &params,
            &track,
            &cfg.sim,
            cfg.max_episode_steps,
            cfg.divergence_threshold,
            |state, _| match controller.act(state, &track, &params) {
                Ok(a) => ControlFlow::Continue(a),
                Err(_) => ControlFlow::Stop,
            },
        )?;
        if end == EpisodeEnd::Diverged {
            stats.diverged += 1;
        }
        if traj.len() < cfg.min_episode_steps {
            stats.skipped += 1;
            continue;
        }
        stats.episodes += 1;
        ds.push(Policy::Pursuit, traj, params);
    }
    stats.total_steps = ds.total_steps();
    Ok((ds, stats))
}
