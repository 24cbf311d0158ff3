use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simcar::{
    emulate, error_report, rollout, Action, NoiseModel, NoiseProcess, SimConfig, State, Trajectory,
    VehicleParams,
};

fn driven_trajectory(steps: usize, seed: u64) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actions: Vec<Action> = (0..steps)
        .map(|_| Action::new(rng.gen_range(0.0..0.8), rng.gen_range(-0.3..0.3)))
        .collect();
    rollout(
        &State::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
        &actions,
        &VehicleParams::nominal(),
        &SimConfig::default(),
    )
    .unwrap()
}

/// Static ground truth isolates the noise process from vehicle motion.
fn static_trajectory(steps: usize) -> Trajectory {
    Trajectory::new(
        vec![State::origin(); steps + 1],
        vec![Action::zero(); steps],
        0,
    )
}

#[test]
fn mocap_preset_is_bitwise_ground_truth() {
    let traj = driven_trajectory(200, 1);
    let rng = ChaCha8Rng::seed_from_u64(5);
    let out = emulate(&traj, &NoiseModel::mocap(), 0.02, rng).unwrap();
    assert_eq!(out.estimated_states.as_ref().unwrap(), &traj.states);
    let report = error_report(&out).unwrap();
    assert_eq!(report.rms, [0.0; 6]);
    assert_eq!(report.max_drift, 0.0);
    assert_eq!(report.outlier_count, 0);
}

#[test]
fn ground_truth_untouched_by_emulation() {
    let traj = driven_trajectory(150, 2);
    let before_states = traj.states.clone();
    let before_actions = traj.actions.clone();
    let out = emulate(&traj, &NoiseModel::vio(), 0.02, ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(out.states, before_states);
    assert_eq!(out.actions, before_actions);
    assert_eq!(traj.states, before_states);
}

#[test]
fn white_noise_rms_matches_configuration() {
    let nm = NoiseModel {
        pos_noise_std: 0.05,
        vel_noise_std: 0.03,
        heading_noise_std: 0.02,
        ..NoiseModel::mocap()
    };
    let traj = static_trajectory(20_000);
    let out = emulate(&traj, &nm, 0.02, ChaCha8Rng::seed_from_u64(13)).unwrap();
    let report = error_report(&out).unwrap();
    for (i, expected) in [0.05, 0.05, 0.02, 0.03, 0.03, 0.03].iter().enumerate() {
        let rel = (report.rms[i] - expected).abs() / expected;
        assert!(
            rel < 0.10,
            "field {i}: rms {} vs configured {expected}",
            report.rms[i]
        );
    }
}

#[test]
fn drift_rms_grows_like_sqrt_time() {
    // Random-walk position error: ensemble RMS at time t should scale as
    // t^0.5. Fit the log-log slope across checkpoints over 100 seeds.
    let nm = NoiseModel {
        drift_rate: 0.05,
        ..NoiseModel::mocap()
    };
    let dt = 0.02;
    let steps = 10_000;
    let checkpoints = [100usize, 215, 464, 1000, 2154, 4641, 10_000];
    let mut sq_sums = vec![0.0f64; checkpoints.len()];
    let truth = State::origin();
    for seed in 0..100u64 {
        let rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let mut process = NoiseProcess::new(nm, dt, rng).unwrap();
        let mut ci = 0;
        for step in 1..=steps {
            let est = process.step(&truth);
            if ci < checkpoints.len() && step == checkpoints[ci] {
                sq_sums[ci] += est.px * est.px + est.py * est.py;
                ci += 1;
            }
        }
    }
    let xs: Vec<f64> = checkpoints.iter().map(|c| (*c as f64).ln()).collect();
    let ys: Vec<f64> = sq_sums
        .iter()
        .map(|s| (s / 100.0).sqrt().ln())
        .collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    assert!(
        (slope - 0.5).abs() < 0.1,
        "log-log drift slope {slope} outside 0.5 +/- 0.1"
    );
}

#[test]
fn corrections_bound_the_drift() {
    let drifting = NoiseModel {
        drift_rate: 0.05,
        ..NoiseModel::mocap()
    };
    let corrected = NoiseModel {
        correction_interval: 100,
        correction_retain: 0.2,
        ..drifting
    };
    let traj = static_trajectory(8000);
    let a = error_report(&emulate(&traj, &drifting, 0.02, ChaCha8Rng::seed_from_u64(3)).unwrap())
        .unwrap();
    let b = error_report(&emulate(&traj, &corrected, 0.02, ChaCha8Rng::seed_from_u64(3)).unwrap())
        .unwrap();
    assert!(
        b.max_drift < a.max_drift * 0.5,
        "corrections did not bound drift: {} vs {}",
        b.max_drift,
        a.max_drift
    );
}

#[test]
fn forced_outliers_clear_the_envelope_every_step() {
    // Heading noise stays off: the angle wraps, so an injected outlier
    // could alias back into range. Outliers only target observed channels.
    let nm = NoiseModel {
        pos_noise_std: 0.02,
        vel_noise_std: 0.02,
        outlier_prob: 1.0,
        outlier_scale: 100.0,
        ..NoiseModel::mocap()
    };
    let truth = State::origin();
    let mut process = NoiseProcess::new(nm, 0.02, ChaCha8Rng::seed_from_u64(21)).unwrap();
    for step in 0..2000 {
        let est = process.step(&truth);
        let max_ratio = [est.px, est.py, est.vx, est.vy, est.omega]
            .iter()
            .map(|v| v.abs() / 0.02)
            .fold(0.0, f64::max);
        assert!(
            max_ratio >= 10.0,
            "step {step}: no dimension cleared 10x its envelope (max ratio {max_ratio})"
        );
    }
}

#[test]
fn latency_delays_estimates() {
    let nm = NoiseModel {
        latency_steps: 2,
        ..NoiseModel::mocap()
    };
    let traj = driven_trajectory(50, 4);
    let out = emulate(&traj, &nm, 0.02, ChaCha8Rng::seed_from_u64(8)).unwrap();
    let est = out.estimated_states.as_ref().unwrap();
    assert_eq!(est[0], traj.states[0]);
    assert_eq!(est[1], traj.states[0]);
    assert_eq!(est[2], traj.states[0]);
    for (t, e) in est.iter().enumerate().skip(3) {
        assert_eq!(*e, traj.states[t - 2], "latency misaligned at {t}");
    }
}

#[test]
fn emulation_is_deterministic_per_seed() {
    let traj = driven_trajectory(300, 6);
    let nm = NoiseModel::slam();
    let a = emulate(&traj, &nm, 0.02, ChaCha8Rng::seed_from_u64(42)).unwrap();
    let b = emulate(&traj, &nm, 0.02, ChaCha8Rng::seed_from_u64(42)).unwrap();
    assert_eq!(a.estimated_states, b.estimated_states);
    let ra = error_report(&a).unwrap();
    let rb = error_report(&b).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn missing_estimates_is_a_domain_error() {
    let traj = driven_trajectory(20, 7);
    assert!(error_report(&traj).is_err());
}

#[test]
fn preset_lookup() {
    assert!(NoiseModel::preset("mocap").is_ok());
    assert!(NoiseModel::preset("slam").is_ok());
    assert!(NoiseModel::preset("vio").is_ok());
    assert!(NoiseModel::preset("gps").is_err());
}

#[test]
fn invalid_noise_model_rejected() {
    let nm = NoiseModel {
        outlier_prob: 1.5,
        ..NoiseModel::mocap()
    };
    assert!(nm.validate().is_err());
    let nm = NoiseModel {
        pos_noise_std: -0.1,
        ..NoiseModel::mocap()
    };
    assert!(NoiseProcess::new(nm, 0.02, ChaCha8Rng::seed_from_u64(0)).is_err());
}
