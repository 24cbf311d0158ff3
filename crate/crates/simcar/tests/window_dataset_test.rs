use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simcar::{
    rollout, slice_windows, Action, Dataset, Policy, SimConfig, SimError, State, Trajectory,
    VehicleParams,
};

fn random_trajectory(steps: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions: Vec<Action> = (0..steps)
        .map(|_| Action::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.4..0.4)))
        .collect();
    let x0 = State::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    rollout(&x0, &actions, &VehicleParams::nominal(), &SimConfig::default()).unwrap()
}

#[test]
fn boundary_length_yields_exactly_one_window() {
    let (k, h) = (8, 4);
    let traj = random_trajectory(k + h, 1);
    let windows = slice_windows(&traj, k, h, 1);
    assert_eq!(windows.len(), 1);
    assert!(windows[0].check(k, h));

    let short = random_trajectory(k + h - 1, 2);
    assert!(slice_windows(&short, k, h, 1).is_empty());
}

#[test]
fn window_count_matches_formula() {
    let (k, h) = (8, 4);
    for (steps, stride) in [(30, 1), (30, 3), (50, 8), (12, 5)] {
        let traj = random_trajectory(steps, steps as u64);
        let windows = slice_windows(&traj, k, h, stride);
        assert_eq!(windows.len(), (steps - k - h) / stride + 1);
    }
}

#[test]
fn windows_tile_back_into_the_source_trajectory() {
    let (k, h) = (8, 4);
    let traj = random_trajectory(k + 3 * h, 3);
    let windows = slice_windows(&traj, k, h, h);
    assert_eq!(windows.len(), 3);

    let mut states = windows[0].hist_states.clone();
    let mut actions = windows[0].hist_actions.clone();
    for w in &windows {
        states.extend_from_slice(&w.future_states);
        actions.extend_from_slice(&w.future_actions);
    }
    assert_eq!(states, traj.states);
    assert_eq!(actions, traj.actions);
}

#[test]
fn constant_velocity_windows_are_uniform_motion() {
    let dt = 0.02;
    let v = 1.5;
    let states: Vec<State> = (0..40)
        .map(|i| State::new(v * dt * i as f64, 0.0, 0.0, v, 0.0, 0.0))
        .collect();
    let actions = vec![Action::zero(); 39];
    let traj = Trajectory::new(states, actions, 0);
    for w in slice_windows(&traj, 8, 4, 4) {
        for pair in w.future_states.windows(2) {
            let dx = pair[1].px - pair[0].px;
            assert!((dx - v * dt).abs() < 1e-12);
            assert_eq!(pair[1].vx, v);
        }
    }
}

#[test]
fn histories_prefer_estimates_targets_stay_truth() {
    let mut traj = random_trajectory(20, 4);
    let shifted: Vec<State> = traj
        .states
        .iter()
        .map(|s| State::new(s.px + 1.0, s.py, s.psi, s.vx, s.vy, s.omega))
        .collect();
    traj.estimated_states = Some(shifted.clone());
    let windows = slice_windows(&traj, 8, 4, 1);
    for (i, w) in windows.iter().enumerate() {
        let t = 8 + i;
        assert_eq!(w.hist_states.as_slice(), &shifted[t - 8..=t]);
        assert_eq!(w.future_states.as_slice(), &traj.states[t + 1..=t + 4]);
        assert_eq!(w.anchor_truth, traj.states[t]);
    }
}

#[test]
fn windowing_is_pure() {
    let traj = random_trajectory(40, 5);
    let a = slice_windows(&traj, 8, 4, 2);
    let b = slice_windows(&traj, 8, 4, 2);
    assert_eq!(a, b);
}

fn sample_dataset() -> Dataset {
    let mut ds = Dataset::new(0.02, 99);
    for i in 0..4 {
        let mut traj = random_trajectory(30 + 5 * i, 10 + i as u64);
        if i % 2 == 0 {
            // Attach estimates to exercise the optional channel.
            let est = traj
                .states
                .iter()
                .map(|s| State::new(s.px + 0.01, s.py - 0.01, s.psi, s.vx, s.vy, s.omega))
                .collect();
            traj.estimated_states = Some(est);
        }
        let policy = if i % 2 == 0 { Policy::Pursuit } else { Policy::Mppi };
        ds.push(policy, traj, VehicleParams::nominal());
    }
    ds
}

#[test]
fn dataset_roundtrip_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let path_a = dir.path().join("a");
    let path_b = dir.path().join("b");
    let ds = sample_dataset();
    ds.write(&path_a).unwrap();
    let once = Dataset::read(&path_a).unwrap();
    // First write quantizes f64 states to f32; after that the cycle must be
    // a fixed point, bit for bit.
    once.write(&path_b).unwrap();
    let twice = Dataset::read(&path_b).unwrap();
    assert_eq!(once, twice);
    for file in ["meta.json", "states.f32", "actions.f32", "est_states.f32"] {
        let a = std::fs::read(path_a.join(file)).unwrap();
        let b = std::fs::read(path_b.join(file)).unwrap();
        assert_eq!(a, b, "file {file} changed across roundtrip");
    }
    // Structure survives: counts, policies, params, estimates.
    assert_eq!(once.entries.len(), ds.entries.len());
    assert_eq!(once.params_table.len(), ds.params_table.len());
    for (r, w) in once.entries.iter().zip(&ds.entries) {
        assert_eq!(r.policy, w.policy);
        assert_eq!(r.traj.len(), w.traj.len());
        assert_eq!(
            r.traj.estimated_states.is_some(),
            w.traj.estimated_states.is_some()
        );
    }
}

#[test]
fn empty_dataset_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::new(0.02, 1);
    ds.write(dir.path()).unwrap();
    let back = Dataset::read(dir.path()).unwrap();
    assert!(back.entries.is_empty());
    assert_eq!(back.dt, 0.02);
    assert_eq!(back.seed, 1);
}

#[test]
fn corrupted_byte_is_a_checksum_error() {
    let dir = tempfile::tempdir().unwrap();
    sample_dataset().write(dir.path()).unwrap();
    let states_path = dir.path().join("states.f32");
    let mut bytes = std::fs::read(&states_path).unwrap();
    bytes[17] ^= 0x40;
    std::fs::write(&states_path, &bytes).unwrap();
    match Dataset::read(dir.path()) {
        Err(SimError::ChecksumMismatch { file }) => assert_eq!(file, "states.f32"),
        other => panic!("expected checksum mismatch, got {other:?}"),
    }
}

#[test]
fn truncated_file_is_a_truncation_error() {
    let dir = tempfile::tempdir().unwrap();
    sample_dataset().write(dir.path()).unwrap();
    let actions_path = dir.path().join("actions.f32");
    let bytes = std::fs::read(&actions_path).unwrap();
    std::fs::write(&actions_path, &bytes[..bytes.len() - 8]).unwrap();
    match Dataset::read(dir.path()) {
        Err(SimError::Truncated { file, .. }) => assert_eq!(file, "actions.f32"),
        other => panic!("expected truncation error, got {other:?}"),
    }
}

#[test]
fn version_mismatch_is_distinct() {
    let dir = tempfile::tempdir().unwrap();
    sample_dataset().write(dir.path()).unwrap();
    let meta_path = dir.path().join("meta.json");
    let text = std::fs::read_to_string(&meta_path).unwrap();
    let bumped = text.replacen("\"schema_version\": 1", "\"schema_version\": 2", 1);
    assert_ne!(text, bumped, "meta.json did not contain the version field");
    std::fs::write(&meta_path, bumped).unwrap();
    match Dataset::read(dir.path()) {
        Err(SimError::VersionMismatch { found, expected }) => {
            assert_eq!(found, 2);
            assert_eq!(expected, 1);
        }
        other => panic!("expected version mismatch, got {other:?}"),
    }
}

#[test]
fn merge_rebases_parameter_ids() {
    let mut a = sample_dataset();
    let b = sample_dataset();
    let n = a.params_table.len();
    a.merge(b).unwrap();
    assert_eq!(a.params_table.len(), 2 * n);
    for (i, entry) in a.entries.iter().enumerate() {
        let expected = if i < 4 { i as u64 } else { (i - 4 + n) as u64 };
        assert_eq!(entry.traj.params_id, expected);
    }
}

#[test]
fn truncate_keeps_whole_episodes_until_budget() {
    let ds = sample_dataset();
    let cut = ds.truncate_steps(40);
    // Episodes are 30 and 35 steps; the second crosses the budget.
    assert_eq!(cut.entries.len(), 2);
    assert!(cut.total_steps() >= 40);
    let all = ds.truncate_steps(10_000);
    assert_eq!(all.entries.len(), ds.entries.len());
}

#[test]
fn split_is_trajectory_level_and_deterministic() {
    let ds = sample_dataset();
    let (train_a, val_a) = ds.split_trajectories(0.25, 7);
    let (train_b, val_b) = ds.split_trajectories(0.25, 7);
    assert_eq!(train_a.entries.len(), train_b.entries.len());
    assert_eq!(val_a.entries.len(), val_b.entries.len());
    assert_eq!(val_a.entries.len(), 1);
    assert_eq!(train_a.entries.len() + val_a.entries.len(), ds.entries.len());
    // No leakage: a trajectory is in exactly one split.
    for v in &val_a.entries {
        assert!(!train_a.entries.iter().any(|t| t.traj == v.traj));
    }
}
