use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::path::Path;

use crate::error::SimError;
use crate::params::VehicleParams;
use crate::state::{Action, State};
use crate::trajectory::Trajectory;

pub const SCHEMA_VERSION: u32 = 1;

const STATES_FILE: &str = "states.f32";
const ACTIONS_FILE: &str = "actions.f32";
const EST_FILE: &str = "est_states.f32";
const META_FILE: &str = "meta.json";

/// Which controller produced a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Pursuit,
    Mppi,
}

/// One stored episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub policy: Policy,
    pub traj: Trajectory,
}

/// In-memory dataset: episodes plus the vehicle parameter table they index
/// into. On disk this becomes a directory of flat little-endian f32 arrays
/// with a JSON sidecar carrying counts, parameters, and checksums.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dt: f64,
    pub seed: u64,
    pub k_default: u32,
    pub h_default: u32,
    pub params_table: Vec<VehicleParams>,
    pub entries: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
struct TrajRecord {
    /// Transition count; the episode holds len + 1 states.
    len: usize,
    params_id: u64,
    policy: Policy,
    has_estimates: bool,
}

#[derive(Serialize, Deserialize)]
struct MetaFile {
    schema_version: u32,
    dt: f64,
    seed: u64,
    k_default: u32,
    h_default: u32,
    total_steps: usize,
    params: Vec<VehicleParams>,
    records: Vec<TrajRecord>,
    checksums: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(dt: f64, seed: u64) -> Self {
        Dataset {
            dt,
            seed,
            k_default: 64,
            h_default: 32,
            params_table: Vec::new(),
            entries: Vec::new(),
        }
    }

    /// Store an episode, assigning its params a fresh table slot.
    pub fn push(&mut self, policy: Policy, mut traj: Trajectory, params: VehicleParams) {
        let id = self.params_table.len() as u64;
        self.params_table.push(params);
        traj.params_id = id;
        self.entries.push(Entry { policy, traj });
    }

    pub fn total_steps(&self) -> usize {
        self.entries.iter().map(|e| e.traj.len()).sum()
    }

    pub fn params_for(&self, traj: &Trajectory) -> &VehicleParams {
        &self.params_table[traj.params_id as usize]
    }

    /// Append all episodes of `other`, rebasing its parameter ids.
    pub fn merge(&mut self, other: Dataset) -> Result<(), SimError> {
        if (self.dt - other.dt).abs() > 1e-12 {
            return Err(SimError::BadConfig(format!(
                "cannot merge datasets with dt {} and {}",
                self.dt, other.dt
            )));
        }
        let offset = self.params_table.len() as u64;
        self.params_table.extend(other.params_table);
        for mut entry in other.entries {
            entry.traj.params_id += offset;
            self.entries.push(entry);
        }
        Ok(())
    }

    /// Keep whole episodes in order until at least `n` steps are covered
    /// (mirrors collection accounting: overshoot is at most one episode).
    pub fn truncate_steps(&self, n: usize) -> Dataset {
        let mut out = Dataset {
            dt: self.dt,
            seed: self.seed,
            k_default: self.k_default,
            h_default: self.h_default,
            params_table: self.params_table.clone(),
            entries: Vec::new(),
        };
        let mut total = 0;
        for entry in &self.entries {
            if total >= n {
                break;
            }
            total += entry.traj.len();
            out.entries.push(entry.clone());
        }
        out
    }

    /// Deterministic trajectory-level split: `val_frac` of episodes (at
    /// least one when possible) go to the validation set. Both halves keep
    /// the full parameter table so ids stay valid.
    pub fn split_trajectories(&self, val_frac: f64, seed: u64) -> (Dataset, Dataset) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = self.entries.len();
        let mut indices: Vec<usize> = (0..n).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        let mut n_val = ((n as f64) * val_frac).round() as usize;
        if val_frac > 0.0 && n >= 2 {
            n_val = n_val.clamp(1, n - 1);
        } else {
            n_val = n_val.min(n);
        }
        let clone_with = |idx: &[usize]| {
            let mut ds = Dataset {
                dt: self.dt,
                seed: self.seed,
                k_default: self.k_default,
                h_default: self.h_default,
                params_table: self.params_table.clone(),
                entries: Vec::new(),
            };
            let mut sorted: Vec<usize> = idx.to_vec();
            sorted.sort_unstable();
            for i in sorted {
                ds.entries.push(self.entries[i].clone());
            }
            ds
        };
        let val = clone_with(&indices[..n_val]);
        let train = clone_with(&indices[n_val..]);
        (train, val)
    }

    pub fn write(&self, path: &Path) -> Result<(), SimError> {
        std::fs::create_dir_all(path).map_err(|e| SimError::io(path.display().to_string(), e))?;

        let mut states = Vec::new();
        let mut actions = Vec::new();
        let mut est = Vec::new();
        let mut any_est = false;
        let mut records = Vec::with_capacity(self.entries.len());
        for entry in &self.entries {
            let traj = &entry.traj;
            for s in &traj.states {
                push_state(&mut states, s);
            }
            for a in &traj.actions {
                push_action(&mut actions, a);
            }
            let has_estimates = traj.estimated_states.is_some();
            if let Some(est_states) = &traj.estimated_states {
                any_est = true;
                for s in est_states {
                    push_state(&mut est, s);
                }
            }
            records.push(TrajRecord {
                len: traj.len(),
                params_id: traj.params_id,
                policy: entry.policy,
                has_estimates,
            });
        }

        let mut checksums = BTreeMap::new();
        checksums.insert(STATES_FILE.to_string(), sha256_hex(&states));
        checksums.insert(ACTIONS_FILE.to_string(), sha256_hex(&actions));
        write_file(&path.join(STATES_FILE), &states)?;
        write_file(&path.join(ACTIONS_FILE), &actions)?;
        if any_est {
            checksums.insert(EST_FILE.to_string(), sha256_hex(&est));
            write_file(&path.join(EST_FILE), &est)?;
        }

        let meta = MetaFile {
            schema_version: SCHEMA_VERSION,
            dt: self.dt,
            seed: self.seed,
            k_default: self.k_default,
            h_default: self.h_default,
            total_steps: self.total_steps(),
            params: self.params_table.clone(),
            records,
            checksums,
        };
        let json = serde_json::to_vec_pretty(&meta)?;
        write_file(&path.join(META_FILE), &json)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Dataset, SimError> {
        let meta_path = path.join(META_FILE);
        let meta_bytes = read_file(&meta_path)?;
        let meta: MetaFile = serde_json::from_slice(&meta_bytes)?;
        if meta.schema_version != SCHEMA_VERSION {
            return Err(SimError::VersionMismatch {
                found: meta.schema_version,
                expected: SCHEMA_VERSION,
            });
        }

        let n_state_floats: usize = meta
            .records
            .iter()
            .map(|r| (r.len + 1) * State::DIM)
            .sum();
        let n_action_floats: usize = meta.records.iter().map(|r| r.len * Action::DIM).sum();
        let n_est_floats: usize = meta
            .records
            .iter()
            .filter(|r| r.has_estimates)
            .map(|r| (r.len + 1) * State::DIM)
            .sum();

        let states = read_checked(path, STATES_FILE, n_state_floats * 4, &meta.checksums)?;
        let actions = read_checked(path, ACTIONS_FILE, n_action_floats * 4, &meta.checksums)?;
        let est = if n_est_floats > 0 || meta.checksums.contains_key(EST_FILE) {
            read_checked(path, EST_FILE, n_est_floats * 4, &meta.checksums)?
        } else {
            Vec::new()
        };

        let state_vals = decode_f32(&states);
        let action_vals = decode_f32(&actions);
        let est_vals = decode_f32(&est);

        let mut ds = Dataset {
            dt: meta.dt,
            seed: meta.seed,
            k_default: meta.k_default,
            h_default: meta.h_default,
            params_table: meta.params,
            entries: Vec::with_capacity(meta.records.len()),
        };
        let (mut si, mut ai, mut ei) = (0usize, 0usize, 0usize);
        for record in &meta.records {
            let n_states = record.len + 1;
            let states: Vec<State> = (0..n_states)
                .map(|j| decode_state(&state_vals[si + j * State::DIM..]))
                .collect();
            si += n_states * State::DIM;
            let actions: Vec<Action> = (0..record.len)
                .map(|j| {
                    let o = ai + j * Action::DIM;
                    Action::new(action_vals[o], action_vals[o + 1])
                })
                .collect();
            ai += record.len * Action::DIM;
            let mut traj = Trajectory::new(states, actions, record.params_id);
            if record.has_estimates {
                let est_states: Vec<State> = (0..n_states)
                    .map(|j| decode_state(&est_vals[ei + j * State::DIM..]))
                    .collect();
                ei += n_states * State::DIM;
                traj.estimated_states = Some(est_states);
            }
            ds.entries.push(Entry {
                policy: record.policy,
                traj,
            });
        }
        Ok(ds)
    }
}

fn push_state(buf: &mut Vec<u8>, s: &State) {
    for v in s.to_array() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn push_action(buf: &mut Vec<u8>, a: &Action) {
    for v in a.to_array() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn decode_f32(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect()
}

fn decode_state(vals: &[f64]) -> State {
    State {
        px: vals[0],
        py: vals[1],
        psi: vals[2],
        vx: vals[3],
        vy: vals[4],
        omega: vals[5],
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    let mut f = std::fs::File::create(path).map_err(|e| SimError::io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| SimError::io(path.display().to_string(), e))
}

fn read_file(path: &Path) -> Result<Vec<u8>, SimError> {
    let mut f = std::fs::File::open(path).map_err(|e| SimError::io(path.display().to_string(), e))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)
        .map_err(|e| SimError::io(path.display().to_string(), e))?;
    Ok(buf)
}

/// Read a payload file, checking its byte length against the metadata and
/// then its checksum; the two failure modes stay distinct.
fn read_checked(
    dir: &Path,
    name: &str,
    expected_bytes: usize,
    checksums: &BTreeMap<String, String>,
) -> Result<Vec<u8>, SimError> {
    let bytes = read_file(&dir.join(name))?;
    if bytes.len() != expected_bytes {
        return Err(SimError::Truncated {
            file: name.to_string(),
            expected: expected_bytes,
            found: bytes.len(),
        });
    }
    match checksums.get(name) {
        Some(expected) if *expected == sha256_hex(&bytes) => Ok(bytes),
        _ => Err(SimError::ChecksumMismatch {
            file: name.to_string(),
        }),
    }
}
