//! Desk-scale wheeled-vehicle simulation stack: a randomized dynamic
//! bicycle model with actuator latency, reference-track synthesis, baseline
//! tracking controllers, state-estimate degradation, trajectory windowing,
//! and a checksummed binary dataset store.

pub mod collect;
pub mod dataset;
pub mod dbm;
pub mod error;
pub mod estimator;
pub mod params;
pub mod pursuit;
pub mod state;
pub mod track;
pub mod trajectory;

pub use collect::{collect_stage1, episode_seed, run_episode, CollectStats, ControlFlow, EpisodeEnd, PursuitController, Stage1Config};
pub use dataset::{Dataset, Entry, Policy};
pub use dbm::{dbm_step, lateral_tire_forces, rollout, SimConfig, TireForces, GRAVITY, VX_BLEND};
pub use error::SimError;
pub use estimator::{emulate, error_report, EstimateReport, NoiseModel, NoiseProcess};
pub use params::{apply_perturbation, randomize_vehicle, ParamRanges, Perturbation, VehicleParams};
pub use pursuit::{pd_throttle, pure_pursuit_steer, PdGains};
pub use state::{wrap_angle, Action, State, STEER_HARD_LIMIT};
pub use track::{synthesize_track, ReferenceTrack, TrackConfig, TrackShape, Waypoint};
pub use trajectory::{slice_windows, Trajectory, WindowSample};
