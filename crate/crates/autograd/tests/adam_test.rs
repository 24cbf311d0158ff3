use autograd::{Adam, AdamConfig, GradError, Tape, Tensor};

#[test]
fn quadratic_converges_to_target() {
    let target = [0.3f32, -1.2, 2.4, 0.0];
    let mut theta = vec![0.0f32; 4];
    let mut adam = Adam::new(
        AdamConfig {
            lr: 1e-2,
            ..AdamConfig::default()
        },
        4,
    )
    .unwrap();
    let mut tape = Tape::new();
    for _ in 0..2000 {
        tape.reset();
        let p = tape.param(&Tensor::from_rows(1, 4, theta.clone()).unwrap());
        let t = tape.input(&Tensor::from_rows(1, 4, target.to_vec()).unwrap());
        let loss = tape.mse_loss(p, t).unwrap();
        tape.backward(loss).unwrap();
        let grad = tape.grad(p).unwrap().to_vec();
        adam.step("theta", &mut theta, &grad).unwrap();
        if theta
            .iter()
            .zip(&target)
            .all(|(a, b)| (a - b).abs() < 1e-4)
        {
            return;
        }
    }
    panic!("did not converge: {theta:?} vs {target:?}");
}

#[test]
fn zero_gradient_leaves_parameters_unchanged() {
    let mut theta = vec![1.5f32, -2.5, 0.25];
    let before = theta.clone();
    let mut adam = Adam::new(AdamConfig::default(), 3).unwrap();
    for _ in 0..10 {
        adam.step("theta", &mut theta, &[0.0, 0.0, 0.0]).unwrap();
    }
    assert_eq!(theta, before);
}

#[test]
fn non_finite_gradient_names_the_parameter() {
    let mut theta = vec![1.0f32, 2.0];
    let mut adam = Adam::new(AdamConfig::default(), 2).unwrap();
    let err = adam
        .step("encoder.w1", &mut theta, &[f32::NAN, 0.0])
        .unwrap_err();
    match err {
        GradError::NonFiniteGradient { name } => assert_eq!(name, "encoder.w1"),
        other => panic!("unexpected error {other:?}"),
    }
    let err = adam
        .step("head.bias", &mut theta, &[0.0, f32::INFINITY])
        .unwrap_err();
    assert!(err.to_string().contains("head.bias"));
}

#[test]
fn identical_runs_are_bitwise_identical() {
    let run = || {
        let mut theta = vec![1.0f32, -1.0, 0.5];
        let mut adam = Adam::new(AdamConfig::default(), 3).unwrap();
        for step in 0..50 {
            let g: Vec<f32> = theta
                .iter()
                .map(|&x| 2.0 * x + (step as f32) * 1e-3)
                .collect();
            adam.step("theta", &mut theta, &g).unwrap();
        }
        theta
    };
    let a = run();
    let b = run();
    assert_eq!(
        a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
        b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
    );
}

#[test]
fn invalid_hyperparameters_are_rejected() {
    for cfg in [
        AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        },
        AdamConfig {
            lr: -1.0,
            ..AdamConfig::default()
        },
        AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        },
        AdamConfig {
            beta2: -0.1,
            ..AdamConfig::default()
        },
    ] {
        assert!(Adam::new(cfg, 4).is_err());
    }
}
