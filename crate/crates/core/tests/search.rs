use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use failsearch::config::{generate_random, ConfigSchema, EnvConfiguration, ParameterValue};
use failsearch::dataset::ClassWeights;
use failsearch::search::{
    genetic_search, hill_climb, random_search, run_campaign, sampling_search, Algorithm,
    CampaignResult, GaConfig, MutationKind, MutationStrategy, SearchBudget, SearchError, SeedKind,
    SeedStrategy, StrategySpec, SurrogateFitness,
};
use failsearch::surrogate::{train, MlpArchitecture, Sample, TrainingConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ramp_schema(low: i64, high: i64) -> ConfigSchema {
    ConfigSchema::from_json_str(&format!(
        r#"{{"name": "ramp", "parameters": [
            {{"name": "level", "kind": "discrete-int", "range": [{low}, {high}], "step": [1, 3]}}
        ], "constraints": []}}"#
    ))
    .unwrap()
}

fn level(c: &EnvConfiguration) -> i64 {
    match c.value(0) {
        ParameterValue::Int(v) => *v,
        other => panic!("unexpected value {other:?}"),
    }
}

fn ramp(c: &EnvConfiguration) -> f64 {
    level(c) as f64 / 10.0
}

fn level_config(schema: &ConfigSchema, v: i64) -> EnvConfiguration {
    schema.configuration(vec![ParameterValue::Int(v)]).unwrap()
}

fn evals(n: u64) -> SearchBudget {
    SearchBudget::FitnessEvaluations(n)
}

/// Smooth synthetic objective on the parking schema.
fn parking_objective(c: &EnvConfiguration) -> f64 {
    let goal = match c.value(0) {
        ParameterValue::Int(v) => *v as f64,
        _ => 0.0,
    };
    let head = match c.value(1) {
        ParameterValue::Float(v) => *v,
        _ => 0.0,
    };
    let cars = match c.value(2) {
        ParameterValue::Set(s) => s.len() as f64,
        _ => 0.0,
    };
    let y = match c.value(3) {
        ParameterValue::Tuple(t) => t[1],
        _ => 0.0,
    };
    (goal / 20.0 + (1.0 - (head - 0.5).abs() * 2.0) + cars / 20.0 + (y + 5.0) / 10.0) / 4.0
}

#[test]
fn hill_climbing_reaches_ramp_top() {
    let schema = ramp_schema(1, 10);
    let start = [level_config(&schema, 1)];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let out = hill_climb(
        &ramp,
        &schema,
        4,
        evals(200),
        SeedStrategy::Failure(&start),
        MutationStrategy::Random,
        &mut rng,
    )
    .unwrap();
    assert_eq!(level(&out.best), 10);
    assert_eq!(out.evaluations, 200);
    assert_eq!(out.fitness, Some(1.0));
}

#[test]
fn constant_fitness_keeps_seed() {
    let schema = ConfigSchema::parking();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let seed = generate_random(&schema, &mut rng).unwrap();
    let pool = [seed.clone()];
    let out = hill_climb(
        &|_: &EnvConfiguration| 0.25,
        &schema,
        5,
        evals(300),
        SeedStrategy::Failure(&pool),
        MutationStrategy::Random,
        &mut rng,
    )
    .unwrap();
    assert_eq!(out.best, seed);
}

#[test]
fn zero_budget_returns_seed_flagged() {
    let schema = ramp_schema(1, 10);
    let pool = [level_config(&schema, 4)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = hill_climb(
        &ramp,
        &schema,
        3,
        evals(0),
        SeedStrategy::Failure(&pool),
        MutationStrategy::Random,
        &mut rng,
    )
    .unwrap();
    assert_eq!(level(&out.best), 4);
    assert!(out.budget_insufficient);
    assert_eq!(out.evaluations, 0);

    let ga = genetic_search(
        &ramp,
        &schema,
        &GaConfig::default(),
        evals(0),
        SeedStrategy::Failure(&pool),
        MutationStrategy::Random,
        &mut rng,
    )
    .unwrap();
    assert!(ga.budget_insufficient);
    let s = sampling_search(&ramp, &schema, evals(0), &mut rng).unwrap();
    assert!(s.budget_insufficient);
    assert_eq!(s.generated, 1);
}

#[test]
fn genetic_search_reaches_ramp_top() {
    let schema = ramp_schema(1, 10);
    let cfg = GaConfig {
        population_size: 10,
        ..GaConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let out = genetic_search(
        &ramp,
        &schema,
        &cfg,
        evals(500),
        SeedStrategy::Random,
        MutationStrategy::Random,
        &mut rng,
    )
    .unwrap();
    assert_eq!(level(&out.best), 10);
    assert_eq!(out.evaluations, 500);
}

#[test]
fn frozen_ga_keeps_initial_best() {
    let schema = ramp_schema(6, 6);
    let cfg = GaConfig {
        population_size: 8,
        crossover_rate: 0.0,
        ..GaConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let out = genetic_search(
        &ramp,
        &schema,
        &cfg,
        evals(100),
        SeedStrategy::Random,
        MutationStrategy::Random,
        &mut rng,
    )
    .unwrap();
    assert_eq!(level(&out.best), 6);
    assert!(out.trace.iter().all(|f| *f == 0.6));
}

#[test]
fn single_failure_fills_population() {
    let schema = ramp_schema(1, 10);
    let star = level_config(&schema, 7);
    let pool = [star.clone()];
    let seen = Mutex::new(Vec::new());
    let recorder = |c: &EnvConfiguration| {
        seen.lock().unwrap().push(c.clone());
        0.0
    };
    let cfg = GaConfig {
        population_size: 10,
        ..GaConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    genetic_search(
        &recorder,
        &schema,
        &cfg,
        evals(10),
        SeedStrategy::Failure(&pool),
        MutationStrategy::Random,
        &mut rng,
    )
    .unwrap();
    let seen = seen.into_inner().unwrap();
    assert_eq!(seen.len(), 10);
    assert!(seen.iter().all(|c| *c == star));
}

#[test]
fn empty_failure_pool_is_rejected() {
    let schema = ramp_schema(1, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let err = hill_climb(
        &ramp,
        &schema,
        2,
        evals(10),
        SeedStrategy::Failure(&[]),
        MutationStrategy::Random,
        &mut rng,
    );
    assert!(matches!(err, Err(SearchError::EmptyFailurePool)));
}

#[test]
fn saliency_needs_a_model() {
    let schema = ramp_schema(1, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let err = hill_climb(
        &ramp,
        &schema,
        2,
        evals(10),
        SeedStrategy::Random,
        MutationStrategy::Saliency,
        &mut rng,
    );
    assert!(matches!(err, Err(SearchError::SaliencyUnavailable)));
}

#[test]
fn sampling_baseline() {
    let schema = ramp_schema(1, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let one = sampling_search(&ramp, &schema, evals(1), &mut rng).unwrap();
    assert_eq!(one.generated, 1);
    assert_eq!(one.fitness, Some(ramp(&one.best)));

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let many = sampling_search(&ramp, &schema, evals(500), &mut rng).unwrap();
    assert_eq!(many.generated, 500);
    assert_eq!(level(&many.best), 10);

    // Oracle: replay the same stream and take the first maximum.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let drawn: Vec<EnvConfiguration> = (0..500)
        .map(|_| generate_random(&schema, &mut rng).unwrap())
        .collect();
    let first_max = drawn.iter().find(|c| level(c) == 10).unwrap();
    assert_eq!(&many.best, first_max);
}

#[test]
fn random_baseline_is_uniform_over_lanes() {
    let schema = ConfigSchema::parking();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000;
    let mut counts = [0usize; 20];
    for _ in 0..n {
        let c = random_search(&schema, &mut rng).unwrap();
        counts[level(&c) as usize - 1] += 1;
    }
    let p = 1.0 / 20.0;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() <= 5.0 * sigma, "{counts:?}");
    }
    let mut a = ChaCha8Rng::seed_from_u64(1);
    let mut b = ChaCha8Rng::seed_from_u64(1);
    assert_eq!(
        random_search(&schema, &mut a).unwrap(),
        random_search(&schema, &mut b).unwrap()
    );
}

#[test]
fn evaluation_accounting_is_exact() {
    let schema = ConfigSchema::parking();
    let failures: Vec<EnvConfiguration> = {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        (0..5)
            .map(|_| generate_random(&schema, &mut rng).unwrap())
            .collect()
    };
    for budget in [1u64, 7, 50, 233] {
        for spec in StrategySpec::all()
            .into_iter()
            .filter(|s| s.mutation == MutationKind::Random)
        {
            if spec.algo == Algorithm::Random {
                continue;
            }
            let calls = AtomicU64::new(0);
            let counted = |c: &EnvConfiguration| {
                calls.fetch_add(1, Ordering::Relaxed);
                parking_objective(c)
            };
            let seeding = match spec.seed_kind {
                SeedKind::Random => SeedStrategy::Random,
                SeedKind::Failure => SeedStrategy::Failure(&failures),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(budget);
            let out = match spec.algo {
                Algorithm::HillClimbing => hill_climb(
                    &counted,
                    &schema,
                    4,
                    evals(budget),
                    seeding,
                    spec.mutation,
                    &mut rng,
                ),
                Algorithm::Genetic => {
                    let cfg = GaConfig {
                        population_size: 10,
                        ..GaConfig::default()
                    };
                    genetic_search(
                        &counted,
                        &schema,
                        &cfg,
                        evals(budget),
                        seeding,
                        spec.mutation,
                        &mut rng,
                    )
                }
                _ => sampling_search(&counted, &schema, evals(budget), &mut rng),
            }
            .unwrap();
            assert_eq!(calls.load(Ordering::Relaxed), budget, "{}", spec.label());
            assert_eq!(out.evaluations, budget);
            assert!(out.all_evaluated_valid);
        }
    }
}

#[test]
fn traces_are_monotone() {
    let schema = ConfigSchema::parking();
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hc = hill_climb(
            &parking_objective,
            &schema,
            4,
            evals(300),
            SeedStrategy::Random,
            MutationStrategy::Random,
            &mut rng,
        )
        .unwrap();
        assert!(hc.trace.windows(2).all(|w| w[1] >= w[0]));
        let ga = genetic_search(
            &parking_objective,
            &schema,
            &GaConfig {
                population_size: 12,
                ..GaConfig::default()
            },
            evals(400),
            SeedStrategy::Random,
            MutationStrategy::Random,
            &mut rng,
        )
        .unwrap();
        assert!(ga.trace.windows(2).all(|w| w[1] >= w[0]));
        assert!(hc.all_evaluated_valid && ga.all_evaluated_valid);
    }
}

#[test]
fn wall_clock_budget_terminates() {
    let schema = ConfigSchema::parking();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let started = std::time::Instant::now();
    let out = hill_climb(
        &parking_objective,
        &schema,
        4,
        SearchBudget::WallClockSeconds(0.05),
        SeedStrategy::Random,
        MutationStrategy::Random,
        &mut rng,
    )
    .unwrap();
    assert!(started.elapsed().as_secs_f64() < 1.0);
    assert!(out.evaluations > 0);
}

#[test]
fn campaigns_are_reproducible_and_round_trip() {
    let schema = ConfigSchema::parking();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pool: Vec<EnvConfiguration> = (0..4)
        .map(|_| generate_random(&schema, &mut rng).unwrap())
        .collect();
    let spec = StrategySpec::new(
        Algorithm::HillClimbing,
        MutationKind::Random,
        SeedKind::Failure,
    );
    let a = run_campaign(&spec, 3, &parking_objective, &schema, evals(40), &pool, 99).unwrap();
    let b = run_campaign(&spec, 3, &parking_objective, &schema, evals(40), &pool, 99).unwrap();
    assert_eq!(a.entries.len(), 3);
    assert!(a
        .entries
        .iter()
        .all(|e| e.fitness.is_some() && e.evals_used == 40));
    assert_eq!(a.configs(), b.configs());
    let json = a.to_json(&schema).unwrap();
    let text = serde_json::to_string(&json).unwrap();
    assert_eq!(
        text,
        serde_json::to_string(&b.to_json(&schema).unwrap()).unwrap()
    );
    let back = CampaignResult::from_json(&schema, &json).unwrap();
    assert_eq!(back.entries, a.entries);
    assert_eq!(back.strategy, spec);

    let random = run_campaign(
        &StrategySpec::random(),
        5,
        &parking_objective,
        &schema,
        evals(40),
        &[],
        1,
    )
    .unwrap();
    assert!(random
        .entries
        .iter()
        .all(|e| e.fitness.is_none() && e.evals_used == 0));
}

#[test]
fn saliency_guided_search_uses_the_surrogate() {
    let schema = ConfigSchema::parking();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let samples: Vec<Sample> = (0..300)
        .map(|_| {
            let c = generate_random(&schema, &mut rng).unwrap();
            let label = parking_objective(&c) > 0.6;
            Sample::new(failsearch::config::encode(&schema, &c).unwrap().0, label)
        })
        .collect();
    let arch = MlpArchitecture::new(schema.encoded_width(), 2).unwrap();
    let model = train(
        &samples,
        &[],
        &arch,
        &TrainingConfig::new(ClassWeights::uniform(), 1),
    )
    .unwrap();
    let fitness = SurrogateFitness::new(&model, &schema).unwrap();
    for algo in [Algorithm::HillClimbing, Algorithm::Genetic] {
        let mut spec = StrategySpec::new(algo, MutationKind::Saliency, SeedKind::Random);
        spec.params.ga.population_size = 10;
        let result = run_campaign(&spec, 4, &fitness, &schema, evals(120), &[], 5).unwrap();
        assert_eq!(result.entries.len(), 4);
        assert!(result.entries.iter().all(|e| e.evals_used == 120));
    }
}
