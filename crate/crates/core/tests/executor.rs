use std::f64::consts::{FRAC_PI_2, PI};

use failsearch::config::{encode, generate_random, ConfigSchema, EnvConfiguration, ParameterValue};
use failsearch::executor::{
    execute, execute_all, is_failure, ExecutionError, ExecutionOutcome, ExternalParams,
    ExternalSut, ParkingScenario, Sut, SutDescriptor, SyntheticParams, SyntheticSut,
    ToyParkingParams, ToyParkingSut,
};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn parking_config(goal: i64, head: f64, cars: &[usize], pos: (f64, f64)) -> EnvConfiguration {
    ConfigSchema::parking()
        .configuration(vec![
            ParameterValue::Int(goal),
            ParameterValue::Float(head),
            ParameterValue::Set(cars.iter().copied().collect()),
            ParameterValue::Tuple(vec![pos.0, pos.1]),
        ])
        .unwrap()
}

fn outcome_with(probability: f64) -> ExecutionOutcome {
    ExecutionOutcome {
        config: parking_config(1, 0.0, &[2], (0.0, 0.0)),
        runs: 10,
        failures: (probability * 10.0) as usize,
        failure_probability: probability,
        trajectories: Vec::new(),
        seeds: vec![0; 10],
        invalid: Vec::new(),
    }
}

#[test]
fn failure_verdict_is_strict() {
    assert!(is_failure(&outcome_with(0.6)));
    assert!(!is_failure(&outcome_with(0.5)));
    assert!(!is_failure(&outcome_with(0.0)));
}

#[test]
fn synthetic_thresholds_at_infinity() {
    let schema = ConfigSchema::parking();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let never = SyntheticParams {
        threshold: Some(f64::INFINITY),
        ..SyntheticParams::default()
    };
    let always = SyntheticParams {
        threshold: Some(f64::NEG_INFINITY),
        ..SyntheticParams::default()
    };
    let mut never = SyntheticSut::new(schema.clone(), never).unwrap();
    let mut always = SyntheticSut::new(schema.clone(), always).unwrap();
    for _ in 0..200 {
        let c = generate_random(&schema, &mut rng).unwrap();
        assert_eq!(
            execute(&mut never, &c, 1, &mut rng)
                .unwrap()
                .failure_probability,
            0.0
        );
        assert_eq!(
            execute(&mut always, &c, 1, &mut rng)
                .unwrap()
                .failure_probability,
            1.0
        );
    }
}

#[test]
fn synthetic_matches_its_formula() {
    let schema = ConfigSchema::parking();
    let params = SyntheticParams::default();
    let mut sut = SyntheticSut::new(schema.clone(), params.clone()).unwrap();
    let bounds = schema.feature_bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut fails = 0;
    let n = 10_000;
    for _ in 0..n {
        let c = generate_random(&schema, &mut rng).unwrap();
        let x: Vec<f64> = encode(&schema, &c)
            .unwrap()
            .0
            .iter()
            .zip(&bounds)
            .map(|(v, (lo, hi))| (v - lo) / (hi - lo))
            .collect();
        let g: f64 = x
            .iter()
            .enumerate()
            .map(|(i, v)| (2.4 * i as f64).cos() * v)
            .sum::<f64>()
            + params.pair_weight * x[0] * x[1];
        let expected = g > sut.threshold();
        let outcome = execute(&mut sut, &c, 1, &mut rng).unwrap();
        assert_eq!(outcome.failure_probability == 1.0, expected);
        assert_eq!(outcome.trajectories[0].timestep_count(), 20);
        fails += expected as usize;
    }
    // Calibrated to 6% on an independent stream.
    let rate = fails as f64 / n as f64;
    assert!((rate - 0.06).abs() < 0.015, "rate {rate}");
}

#[test]
fn synthetic_noise_replays_seeded_draws() {
    let schema = ConfigSchema::parking();
    let params = SyntheticParams {
        threshold: Some(f64::INFINITY),
        noise: 0.7,
        ..SyntheticParams::default()
    };
    let mut sut = SyntheticSut::new(schema, params).unwrap();
    assert!(!sut.is_deterministic());
    let config = parking_config(3, 0.2, &[5, 9], (1.0, -2.0));
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    let outcome = execute(&mut sut, &config, 10, &mut rng).unwrap();

    let mut replay = ChaCha8Rng::seed_from_u64(2718);
    let expected = (0..10)
        .filter(|_| ChaCha8Rng::seed_from_u64(replay.next_u64()).random_bool(0.7))
        .count();
    assert_eq!(outcome.failures, expected);
    assert_eq!(outcome.failure_probability, expected as f64 / 10.0);
    assert_eq!(outcome.trajectories.len(), 10);
    assert_eq!(outcome.seeds.len(), 10);
}

#[test]
fn deterministic_runs_repeat_exactly() {
    let schema = ConfigSchema::parking();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let configs: Vec<EnvConfiguration> = (0..30)
        .map(|_| generate_random(&schema, &mut rng).unwrap())
        .collect();
    for descriptor in [
        SutDescriptor::SyntheticAnalytic(SyntheticParams::default()),
        SutDescriptor::ToyParking(ToyParkingParams::default()),
    ] {
        assert_eq!(descriptor.default_runs(), 1);
        let a = execute_all(&descriptor, &schema, &configs, 1, 9).unwrap();
        let b = execute_all(&descriptor, &schema, &configs, 1, 9).unwrap();
        assert_eq!(a, b);
        assert!(a
            .iter()
            .all(|o| o.failure_probability == 0.0 || o.failure_probability == 1.0));
        for o in &a {
            let back = ExecutionOutcome::from_json(&schema, &o.to_json(&schema).unwrap()).unwrap();
            assert_eq!(&back, o);
        }
    }
    let noisy = SutDescriptor::SyntheticAnalytic(SyntheticParams {
        noise: 0.1,
        ..SyntheticParams::default()
    });
    assert_eq!(noisy.default_runs(), 10);
}

#[test]
fn invalid_configuration_is_rejected() {
    let schema = ConfigSchema::parking();
    let mut sut = SyntheticSut::new(schema.clone(), SyntheticParams::default()).unwrap();
    let bad = schema
        .configuration_unchecked(vec![
            ParameterValue::Int(4),
            ParameterValue::Float(0.1),
            ParameterValue::Set([4].into_iter().collect()),
            ParameterValue::Tuple(vec![0.0, 0.0]),
        ])
        .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(matches!(
        execute(&mut sut, &bad, 1, &mut rng),
        Err(ExecutionError::InvalidConfig(_))
    ));
}

fn parking_sut() -> ToyParkingSut {
    ToyParkingSut::new(ConfigSchema::parking(), ToyParkingParams::default()).unwrap()
}

#[test]
fn parking_goal_ahead_succeeds() {
    let sut = parking_sut();
    for goal in [5, 6] {
        let (failed, path) = sut.simulate(&ParkingScenario {
            goal,
            heading: FRAC_PI_2,
            occupied: Vec::new(),
            start: (0.0, 0.0),
        });
        assert!(!failed, "goal {goal}");
        assert!(path.len() < 100);
    }
    let mut sut = parking_sut();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let o = execute(
        &mut sut,
        &parking_config(5, 0.0, &[15], (0.0, 0.0)),
        1,
        &mut rng,
    )
    .unwrap();
    assert_eq!(o.failure_probability, 0.0);
}

#[test]
fn parking_reversed_between_cars_fails() {
    let mut sut = parking_sut();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for goal in [5, 6] {
        let cfg = parking_config(
            goal,
            0.5,
            &[goal as usize - 1, goal as usize + 1],
            (0.0, 0.0),
        );
        let o = execute(&mut sut, &cfg, 1, &mut rng).unwrap();
        assert_eq!(o.failure_probability, 1.0, "goal {goal}");
    }
    let scenario = sut
        .scenario(&parking_config(5, 0.5, &[4, 6], (0.0, 0.0)))
        .unwrap();
    assert!((scenario.heading - (FRAC_PI_2 + PI)).abs() < 1e-12);
}

#[test]
fn parking_zero_timeout_fails() {
    let params = ToyParkingParams {
        timeout_steps: 0,
        ..ToyParkingParams::default()
    };
    let mut sut = ToyParkingSut::new(ConfigSchema::parking(), params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let o = execute(
        &mut sut,
        &parking_config(5, 0.0, &[15], (0.0, 0.0)),
        1,
        &mut rng,
    )
    .unwrap();
    assert_eq!(o.failure_probability, 1.0);
    assert_eq!(o.trajectories[0].timestep_count(), 1);
}

#[test]
fn parking_paths_never_teleport() {
    let schema = ConfigSchema::parking();
    let mut sut = parking_sut();
    let limit = sut.params().max_speed * sut.params().dt + 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut failures = 0;
    for _ in 0..500 {
        let c = generate_random(&schema, &mut rng).unwrap();
        let o = execute(&mut sut, &c, 1, &mut rng).unwrap();
        failures += o.failures;
        for w in o.trajectories[0].samples.windows(2) {
            assert!((w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]) <= limit);
        }
    }
    // Failures are uncommon but present under uniform sampling.
    assert!((20..=150).contains(&failures), "{failures}");
}

#[test]
fn parking_rejects_other_schemas() {
    assert!(ToyParkingSut::new(ConfigSchema::trackgen(), ToyParkingParams::default()).is_err());
}

fn stub(script: &str, timeout: f64) -> ExternalSut {
    ExternalSut::new(
        ConfigSchema::parking(),
        ExternalParams {
            command: vec!["sh".into(), "-c".into(), script.into()],
            timeout_secs: timeout,
            deterministic: true,
        },
    )
}

#[test]
fn external_conforming_stub() {
    let mut sut = stub(
        r#"while read line; do echo '{"failure": false, "trajectory": [[0]]}'; done"#,
        5.0,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let o = execute(
        &mut sut,
        &parking_config(2, 0.3, &[7], (1.0, 1.0)),
        3,
        &mut rng,
    )
    .unwrap();
    assert_eq!((o.failures, o.valid_runs()), (0, 3));
    assert_eq!(o.trajectories[0].samples, vec![vec![0.0]]);
}

#[test]
fn external_stub_sees_config_and_seed() {
    // Fails exactly when the request mentions goal lane 2.
    let script = r#"while read line; do
        case "$line" in
            *'"goal_lane":2'*) echo '{"failure": true, "trajectory": [[1, 2], [3, 4]]}' ;;
            *) echo '{"failure": false, "trajectory": [[0, 0]]}' ;;
        esac
    done"#;
    let mut sut = stub(script, 5.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let o = execute(
        &mut sut,
        &parking_config(2, 0.3, &[7], (1.0, 1.0)),
        2,
        &mut rng,
    )
    .unwrap();
    assert_eq!(o.failure_probability, 1.0);
    let o = execute(
        &mut sut,
        &parking_config(3, 0.3, &[7], (1.0, 1.0)),
        2,
        &mut rng,
    )
    .unwrap();
    assert_eq!(o.failure_probability, 0.0);
}

#[test]
fn external_missing_failure_is_protocol_error() {
    let mut sut = stub(
        r#"while read line; do echo '{"trajectory": [[0]]}'; done"#,
        5.0,
    );
    let err = sut
        .episode(&parking_config(2, 0.3, &[7], (1.0, 1.0)), 1, 0)
        .unwrap_err();
    assert!(
        matches!(err, ExecutionError::Protocol { run: 0, .. }),
        "{err}"
    );
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let o = execute(
        &mut sut,
        &parking_config(2, 0.3, &[7], (1.0, 1.0)),
        2,
        &mut rng,
    )
    .unwrap();
    assert_eq!(o.valid_runs(), 0);
    assert_eq!(o.invalid.len(), 2);
    assert_eq!(o.failures, 0);
}

#[test]
fn external_timeout_names_the_run() {
    let mut sut = stub("while read line; do sleep 5; done", 0.3);
    let err = sut
        .episode(&parking_config(2, 0.3, &[7], (1.0, 1.0)), 1, 4)
        .unwrap_err();
    assert!(
        matches!(err, ExecutionError::Timeout { run: 4, .. }),
        "{err}"
    );
}

#[test]
fn external_crash_reports_stderr() {
    let mut sut = stub("read line; echo 'simulator exploded' >&2; exit 3", 5.0);
    let err = sut
        .episode(&parking_config(2, 0.3, &[7], (1.0, 1.0)), 1, 0)
        .unwrap_err();
    assert!(matches!(err, ExecutionError::Exited { .. }), "{err}");
    assert!(err.to_string().contains("simulator exploded"), "{err}");
}

#[test]
fn external_missing_program_is_spawn_error() {
    let mut sut = ExternalSut::new(
        ConfigSchema::parking(),
        ExternalParams {
            command: vec!["/nonexistent/simulator".into()],
            timeout_secs: 1.0,
            deterministic: true,
        },
    );
    let err = sut
        .episode(&parking_config(2, 0.3, &[7], (1.0, 1.0)), 1, 0)
        .unwrap_err();
    assert!(matches!(err, ExecutionError::Spawn { .. }));
}

#[test]
fn descriptors_round_trip_through_json() {
    for d in [
        SutDescriptor::SyntheticAnalytic(SyntheticParams::default()),
        SutDescriptor::ToyParking(ToyParkingParams::default()),
        SutDescriptor::ExternalProcess(ExternalParams {
            command: vec!["sim".into(), "--fast".into()],
            timeout_secs: 2.0,
            deterministic: false,
        }),
    ] {
        let text = serde_json::to_string(&d).unwrap();
        let back: SutDescriptor = serde_json::from_str(&text).unwrap();
        assert_eq!(back, d);
    }
    let d: SutDescriptor = serde_json::from_str(r#"{"kind": "synthetic-analytic", "pair": [0, 1], "pair_weight": 1.5, "failure_rate": 0.1, "noise": 0.0}"#).unwrap();
    assert!(d.is_deterministic());
}
