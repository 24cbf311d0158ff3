use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simcar::{
    apply_perturbation, randomize_vehicle, rollout, Action, ParamRanges, Perturbation, SimConfig,
    State, VehicleParams,
};

#[test]
fn ten_thousand_draws_satisfy_invariants_and_ranges() {
    let ranges = ParamRanges::default();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..10_000 {
        let p = randomize_vehicle(&mut rng, &ranges).unwrap();
        p.validate().unwrap();
        let within = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        assert!(within(p.mass, ranges.mass));
        assert!(within(p.yaw_inertia, ranges.yaw_inertia));
        assert!(within(p.lf, ranges.lf));
        assert!(within(p.lr, ranges.lr));
        assert!(within(p.cf, ranges.stiffness));
        assert!(within(p.cr, ranges.stiffness));
        assert!(within(p.friction_f, ranges.friction));
        assert_eq!(p.friction_f, p.friction_r);
        assert!(within(p.max_accel, ranges.max_accel));
        assert!(within(p.drag_coeff, ranges.drag_coeff));
        assert!(within(p.rolling_resistance, ranges.rolling_resistance));
        assert!(within(p.delta_max, ranges.delta_max));
        assert!(p.actuator_latency_steps <= ranges.latency_steps.1);
        assert!(p.wheelbase() >= 0.2 && p.wheelbase() <= 0.5);
        assert_eq!(p.tow_drag, 0.0);
        assert_eq!(p.payload_mass, 0.0);
    }
}

#[test]
fn degenerate_ranges_give_exact_values() {
    let ranges = ParamRanges {
        mass: (3.0, 3.0),
        yaw_inertia: (0.05, 0.05),
        lf: (0.15, 0.15),
        lr: (0.18, 0.18),
        stiffness: (25.0, 25.0),
        friction: (0.7, 0.7),
        max_accel: (5.0, 5.0),
        drag_coeff: (0.1, 0.1),
        rolling_resistance: (0.2, 0.2),
        delta_max: (0.4, 0.4),
        latency_steps: (2, 2),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = randomize_vehicle(&mut rng, &ranges).unwrap();
    assert_eq!(p.mass, 3.0);
    assert_eq!(p.yaw_inertia, 0.05);
    assert_eq!(p.lf, 0.15);
    assert_eq!(p.lr, 0.18);
    assert_eq!(p.cf, 25.0);
    assert_eq!(p.cr, 25.0);
    assert_eq!(p.friction_f, 0.7);
    assert_eq!(p.max_accel, 5.0);
    assert_eq!(p.delta_max, 0.4);
    assert_eq!(p.actuator_latency_steps, 2);
}

#[test]
fn inverted_range_rejected() {
    let ranges = ParamRanges {
        mass: (6.0, 1.0),
        ..ParamRanges::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let err = randomize_vehicle(&mut rng, &ranges).unwrap_err();
    assert!(err.to_string().contains("mass"), "error was: {err}");
}

#[test]
fn same_seed_gives_identical_params() {
    let ranges = ParamRanges::default();
    let a = randomize_vehicle(&mut ChaCha8Rng::seed_from_u64(9), &ranges).unwrap();
    let b = randomize_vehicle(&mut ChaCha8Rng::seed_from_u64(9), &ranges).unwrap();
    assert_eq!(a, b);
}

#[test]
fn payload_applied_twice_doubles_mass() {
    let base = VehicleParams::nominal();
    let once = apply_perturbation(&base, Perturbation::Payload { mass: 0.8 }).unwrap();
    let twice = apply_perturbation(&once, Perturbation::Payload { mass: 0.8 }).unwrap();
    assert_eq!(once.payload_mass, 0.8);
    assert_eq!(twice.payload_mass, 1.6);
    // Chassis untouched.
    assert_eq!(twice.mass, base.mass);
}

#[test]
fn plastic_wheels_scale_friction_as_configured() {
    let base = VehicleParams::nominal();
    let front = apply_perturbation(&base, Perturbation::PlasticWheelsFront { factor: 0.5 }).unwrap();
    assert_eq!(front.friction_f, base.friction_f * 0.5);
    assert_eq!(front.friction_r, base.friction_r);
    let all = apply_perturbation(&base, Perturbation::PlasticWheelsAll { factor: 0.5 }).unwrap();
    assert_eq!(all.friction_f, base.friction_f * 0.5);
    assert_eq!(all.friction_r, base.friction_r * 0.5);
}

#[test]
fn tow_box_adds_drag_and_mass() {
    let base = VehicleParams::nominal();
    let towed = apply_perturbation(&base, Perturbation::tow_box_default_for(&base)).unwrap();
    assert!(towed.tow_drag > 0.0);
    assert!(towed.payload_mass > 0.0);
}

#[test]
fn invalid_perturbation_magnitudes_rejected() {
    let base = VehicleParams::nominal();
    assert!(apply_perturbation(&base, Perturbation::PlasticWheelsAll { factor: 0.0 }).is_err());
    assert!(apply_perturbation(&base, Perturbation::PlasticWheelsAll { factor: 1.5 }).is_err());
    assert!(apply_perturbation(&base, Perturbation::Payload { mass: -1.0 }).is_err());
    assert!(apply_perturbation(
        &base,
        Perturbation::TowBox {
            drag: f64::NAN,
            mass: 0.0
        }
    )
    .is_err());
}

#[test]
fn perturbed_vehicle_diverges_under_same_actions() {
    let cfg = SimConfig::default();
    let base = VehicleParams::nominal();
    let actions: Vec<Action> = (0..100)
        .map(|i| Action::new(0.6, 0.25 * ((i as f64) * 0.05).sin()))
        .collect();
    let x0 = State::new(0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let nominal = rollout(&x0, &actions, &base, &cfg).unwrap();
    for perturbation in [
        Perturbation::tow_box_default_for(&base),
        Perturbation::payload_default_for(&base),
        Perturbation::plastic_front_default(),
        Perturbation::plastic_all_default(),
    ] {
        let perturbed_params = apply_perturbation(&base, perturbation).unwrap();
        let perturbed = rollout(&x0, &actions, &perturbed_params, &cfg).unwrap();
        let a = nominal.states.last().unwrap();
        let b = perturbed.states.last().unwrap();
        let dist = ((a.px - b.px).powi(2) + (a.py - b.py).powi(2)).sqrt();
        assert!(
            dist > 1e-3,
            "perturbation {perturbation:?} left endpoint within {dist}"
        );
    }
}
