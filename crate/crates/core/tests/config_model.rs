use std::collections::BTreeSet;

use failsearch::config::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn parking(goal: i64, head: f64, pv: &[usize], pos: (f64, f64)) -> Vec<ParameterValue> {
    vec![
        ParameterValue::Int(goal),
        ParameterValue::Float(head),
        ParameterValue::Set(pv.iter().copied().collect()),
        ParameterValue::Tuple(vec![pos.0, pos.1]),
    ]
}

fn unchecked(schema: &ConfigSchema, values: Vec<ParameterValue>) -> EnvConfiguration {
    schema.configuration_unchecked(values).unwrap()
}

fn one_point_schema() -> ConfigSchema {
    ConfigSchema::new(
        "point",
        vec![ParameterSpec {
            name: "x".into(),
            kind: ParameterKind::DiscreteInt {
                range: IntRange(1, 1),
                step: IntRange(1, 3),
            },
        }],
        vec![],
    )
    .unwrap()
}

#[test]
fn figure_one_configuration_is_valid() {
    let s = ConfigSchema::parking();
    let e = unchecked(&s, parking(20, 0.0, &[3, 5, 6, 8, 13], (0.0, 0.0)));
    assert!(validate(&s, &e).unwrap().is_ok());
}

#[test]
fn goal_in_parked_vehicles_is_reported() {
    let s = ConfigSchema::parking();
    let e = unchecked(&s, parking(5, 0.0, &[5], (0.0, 0.0)));
    assert_eq!(
        validate(&s, &e).unwrap().violations,
        vec!["goal-not-in-pvehicles"]
    );
}

#[test]
fn heading_upper_bound_is_exclusive() {
    let s = ConfigSchema::parking();
    let e = unchecked(&s, parking(20, 1.0, &[], (0.0, 0.0)));
    assert_eq!(validate(&s, &e).unwrap().violations, vec!["head_ego-range"]);
}

#[test]
fn violations_follow_schema_order() {
    let s = ConfigSchema::parking();
    let e = unchecked(&s, parking(21, 1.5, &[22], (0.0, 9.0)));
    assert_eq!(
        validate(&s, &e).unwrap().violations,
        vec![
            "goal_lane-range",
            "head_ego-range",
            "pvehicles-range",
            "pos_ego-range"
        ]
    );
}

#[test]
fn arity_mismatch_is_an_error() {
    let s = ConfigSchema::parking();
    assert!(matches!(
        s.configuration_unchecked(vec![ParameterValue::Int(1)]),
        Err(SchemaError::Mismatch { .. })
    ));
    let wrong_kind = vec![
        ParameterValue::Float(1.0),
        ParameterValue::Float(0.0),
        ParameterValue::Set(BTreeSet::new()),
        ParameterValue::Tuple(vec![0.0, 0.0]),
    ];
    assert!(matches!(
        s.configuration_unchecked(wrong_kind),
        Err(SchemaError::Mismatch { .. })
    ));
}

#[test]
fn encode_worked_example() {
    let s = ConfigSchema::parking();
    let e = s
        .configuration(parking(20, 0.0, &[3, 5, 6, 8, 13, 19], (0.0, 0.0)))
        .unwrap();
    let fv = encode(&s, &e).unwrap();
    let expected = vec![
        20.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0, 0.0, 0.0,
    ];
    assert_eq!(fv.0, expected);
    assert_eq!(fv.len(), 24);
    assert_eq!(decode(&s, &fv.0).unwrap(), e);
}

#[test]
fn empty_index_set_encodes_to_zeros() {
    let s = ConfigSchema::parking();
    let e = s.configuration(parking(1, 0.25, &[], (1.0, -2.0))).unwrap();
    let fv = encode(&s, &e).unwrap();
    assert!(fv.0[2..22].iter().all(|&x| x == 0.0));
}

#[test]
fn command_list_encoding_puts_ids_first() {
    let s = ConfigSchema::trackgen();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let e = generate_random(&s, &mut rng).unwrap();
    let fv = encode(&s, &e).unwrap();
    assert_eq!(fv.len(), 24);
    let ParameterValue::Commands(pairs) = e.value(0) else {
        panic!()
    };
    for (i, (c, v)) in pairs.iter().enumerate() {
        assert_eq!(fv.0[i], c.id() as f64);
        assert_eq!(fv.0[12 + i], *v);
    }
}

#[test]
fn one_point_space_generates_its_point_and_never_mutates() {
    let s = one_point_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e = generate_random(&s, &mut rng).unwrap();
    assert_eq!(e.values(), &[ParameterValue::Int(1)]);
    assert_eq!(mutate_random(&s, &e, &mut rng), e);
    assert_eq!(
        mutate_directed(
            &s,
            &e,
            MutationTarget::param(0),
            Direction::Positive,
            &mut rng
        ),
        e
    );
}

#[test]
fn unsatisfiable_schema_fails_generation_after_cap() {
    let s = ConfigSchema::new(
        "unsat",
        vec![
            ParameterSpec {
                name: "goal".into(),
                kind: ParameterKind::DiscreteInt {
                    range: IntRange(1, 1),
                    step: IntRange(1, 1),
                },
            },
            ParameterSpec {
                name: "cars".into(),
                kind: ParameterKind::IndexSet {
                    universe: 1,
                    count: IntRange(1, 1),
                    shift: IntRange(1, 1),
                    initial_size: Some(IntRange(1, 1)),
                },
            },
        ],
        vec![ConstraintSpec::NotMember {
            name: "goal-free".into(),
            scalar: "goal".into(),
            set: "cars".into(),
        }],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    match generate_random(&s, &mut rng) {
        Err(SchemaError::GenerationFailed { attempts }) => assert_eq!(attempts, 1000),
        other => panic!("expected generation failure, got {other:?}"),
    }
}

#[test]
fn schema_rejects_unknown_constraint_parameter() {
    let json = r#"{"name":"x","parameters":[{"name":"a","kind":"discrete-int","range":[1,2],"step":[1,1]}],
        "constraints":[{"rule":"not-member","name":"c","scalar":"a","set":"b"}]}"#;
    assert!(matches!(
        ConfigSchema::from_json_str(json),
        Err(SchemaError::Invalid(_))
    ));
}

#[test]
fn schema_rejects_duplicate_names_and_empty_ranges() {
    let dup = r#"{"name":"x","parameters":[
        {"name":"a","kind":"discrete-int","range":[1,2],"step":[1,1]},
        {"name":"a","kind":"discrete-int","range":[1,2],"step":[1,1]}]}"#;
    assert!(ConfigSchema::from_json_str(dup).is_err());
    let empty = r#"{"name":"x","parameters":[{"name":"a","kind":"discrete-int","range":[3,2],"step":[1,1]}]}"#;
    assert!(ConfigSchema::from_json_str(empty).is_err());
}

#[test]
fn schema_json_round_trips() {
    for s in [
        ConfigSchema::parking(),
        ConfigSchema::perturbation(),
        ConfigSchema::trackgen(),
    ] {
        let back = ConfigSchema::from_json_str(&s.to_json_string()).unwrap();
        assert_eq!(back.parameters(), s.parameters());
        assert_eq!(back.constraints(), s.constraints());
        assert_eq!(back.crossover_retries(), s.crossover_retries());
    }
    assert_eq!(ConfigSchema::trackgen().crossover_retries(), 10);
    assert_eq!(ConfigSchema::parking().crossover_retries(), 1);
    assert_eq!(ConfigSchema::perturbation().encoded_width(), 47);
}

#[test]
fn head_ego_can_be_raised_to_one_half() {
    // Directed +step from 0.0 with steps in [0, 1) reaches 0.5 on some seed.
    let s = ConfigSchema::parking();
    let e = s
        .configuration(parking(20, 0.0, &[3, 5, 6, 8, 13, 19], (0.0, 0.0)))
        .unwrap();
    let hits = (0..2000u64).any(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mutate_directed(
            &s,
            &e,
            MutationTarget::param(1),
            Direction::Positive,
            &mut rng,
        );
        matches!(m.value(1), ParameterValue::Float(h) if (h - 0.5).abs() < 1e-3)
    });
    assert!(hits);
}

#[test]
fn directed_mutation_respects_direction() {
    let s = ConfigSchema::parking();
    let e = s.configuration(parking(10, 0.3, &[1], (0.0, 0.0))).unwrap();
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let up = mutate_directed(
            &s,
            &e,
            MutationTarget::param(1),
            Direction::Positive,
            &mut rng,
        );
        let ParameterValue::Float(h) = up.value(1) else {
            panic!()
        };
        assert!(*h >= 0.3);
        let down = mutate_directed(
            &s,
            &e,
            MutationTarget::param(0),
            Direction::Negative,
            &mut rng,
        );
        let ParameterValue::Int(g) = down.value(0) else {
            panic!()
        };
        assert!(*g <= 10);
    }
}

#[test]
fn goal_lane_at_upper_bound_cannot_go_up() {
    let s = ConfigSchema::parking();
    let e = s.configuration(parking(20, 0.0, &[], (0.0, 0.0))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let m = mutate_directed(
        &s,
        &e,
        MutationTarget::param(0),
        Direction::Positive,
        &mut rng,
    );
    assert_eq!(m, e);
}

#[test]
fn can_move_rejects_no_op_directions() {
    let s = ConfigSchema::parking();
    let e = s.configuration(parking(20, 0.0, &[3], (0.0, 0.0))).unwrap();
    let at = |param, element| MutationTarget { param, element };
    assert!(!can_move(&s, &e, at(0, None), Direction::Positive));
    assert!(can_move(&s, &e, at(0, None), Direction::Negative));
    assert!(!can_move(&s, &e, at(2, Some(2)), Direction::Positive));
    assert!(can_move(&s, &e, at(2, Some(2)), Direction::Negative));
    assert!(can_move(&s, &e, at(2, Some(3)), Direction::Positive));
    assert!(!can_move(&s, &e, at(2, Some(3)), Direction::Negative));
    assert!(can_move(&s, &e, at(3, Some(1)), Direction::Positive));
    assert!(!can_move(&s, &e, at(9, None), Direction::Positive));
}

#[test]
fn directed_index_set_adds_and_removes_attributed_slot() {
    let s = ConfigSchema::parking();
    let e = s.configuration(parking(20, 0.0, &[3], (0.0, 0.0))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let add = mutate_directed(
        &s,
        &e,
        MutationTarget {
            param: 2,
            element: Some(6),
        },
        Direction::Positive,
        &mut rng,
    );
    assert_eq!(add.value(2), &ParameterValue::Set(BTreeSet::from([3, 7])));
    let remove = mutate_directed(
        &s,
        &add,
        MutationTarget {
            param: 2,
            element: Some(2),
        },
        Direction::Negative,
        &mut rng,
    );
    assert_eq!(remove.value(2), &ParameterValue::Set(BTreeSet::from([7])));
    // Adding the goal lane is invalid: identity.
    let blocked = mutate_directed(
        &s,
        &e,
        MutationTarget {
            param: 2,
            element: Some(19),
        },
        Direction::Positive,
        &mut rng,
    );
    assert_eq!(blocked, e);
}

#[test]
fn worked_crossover_example_splices_as_published() {
    let s = ConfigSchema::parking();
    let e1 = unchecked(&s, parking(20, 0.0, &[3, 5, 6, 8, 13, 19], (0.0, 0.0)));
    let e2 = unchecked(&s, parking(15, 0.5, &[1, 3, 9], (-1.0, 7.5)));
    let (c1, c2) = splice(&s, &e1, &e2, 1).unwrap();
    assert_eq!(
        c1.values(),
        parking(20, 0.5, &[1, 3, 9], (-1.0, 7.5)).as_slice()
    );
    assert_eq!(
        c2.values(),
        parking(15, 0.0, &[3, 5, 6, 8, 13, 19], (0.0, 0.0)).as_slice()
    );
}

#[test]
fn crossover_of_identical_parents_is_identity() {
    let s = ConfigSchema::parking();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = generate_random(&s, &mut rng).unwrap();
    let (c1, c2) = crossover_single_point(&s, &a, &a, &mut rng).unwrap();
    assert_eq!((c1, c2), (a.clone(), a));
}

#[test]
fn invalid_children_return_parents() {
    let s = ConfigSchema::parking();
    // Cut at 1 gives child [2, .., {2}, ..]: goal lane parked.
    let a = s.configuration(parking(2, 0.1, &[5], (0.0, 0.0))).unwrap();
    let b = s.configuration(parking(9, 0.2, &[2], (1.0, 1.0))).unwrap();
    for cut in 1..4 {
        let (c1, c2) = crossover_at(&s, &a, &b, cut).unwrap();
        if cut <= 2 {
            assert_eq!((&c1, &c2), (&a, &b), "cut {cut}");
        } else {
            assert_ne!(c1, a);
        }
    }
}

#[test]
fn trackgen_crossover_cuts_pairs() {
    let s = ConfigSchema::trackgen();
    assert_eq!(s.crossover_positions(), 12);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = generate_random(&s, &mut rng).unwrap();
    let b = generate_random(&s, &mut rng).unwrap();
    let (c1, _) = splice(&s, &a, &b, 5).unwrap();
    let (ParameterValue::Commands(pa), ParameterValue::Commands(pb), ParameterValue::Commands(pc)) =
        (a.value(0), b.value(0), c1.value(0))
    else {
        panic!()
    };
    assert_eq!(&pc[..5], &pa[..5]);
    assert_eq!(&pc[5..], &pb[5..]);
}

#[test]
fn configuration_json_round_trip_and_shape() {
    let s = ConfigSchema::parking();
    let e = s
        .configuration(parking(20, 0.0, &[3, 5], (0.0, -1.5)))
        .unwrap();
    let j = config_to_json(&s, &e).unwrap();
    assert_eq!(
        j.to_string(),
        r#"{"goal_lane":20,"head_ego":0.0,"pvehicles":[3,5],"pos_ego":[0.0,-1.5]}"#
    );
    assert_eq!(config_from_json(&s, &j).unwrap(), e);
    let t = ConfigSchema::trackgen();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e = generate_random(&t, &mut rng).unwrap();
    assert_eq!(
        config_from_json(&t, &config_to_json(&t, &e).unwrap()).unwrap(),
        e
    );
}

#[test]
fn random_generation_valid_for_many_seeds() {
    for schema in [
        ConfigSchema::parking(),
        ConfigSchema::perturbation(),
        ConfigSchema::trackgen(),
    ] {
        for seed in 0..10_000u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let e = generate_random(&schema, &mut rng).unwrap();
            assert!(
                validate(&schema, &e).unwrap().is_ok(),
                "{} seed {seed}",
                schema.name()
            );
        }
    }
}

fn count_changed(a: &EnvConfiguration, b: &EnvConfiguration) -> usize {
    a.values()
        .iter()
        .zip(b.values())
        .filter(|(x, y)| x != y)
        .count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn operators_preserve_validity(seed in any::<u64>(), which in 0usize..3) {
        let schema = [ConfigSchema::parking(), ConfigSchema::perturbation(), ConfigSchema::trackgen()][which].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = generate_random(&schema, &mut rng).unwrap();
        let b = generate_random(&schema, &mut rng).unwrap();

        let m = mutate_random(&schema, &a, &mut rng);
        prop_assert!(validate(&schema, &m).unwrap().is_ok());
        prop_assert!(count_changed(&a, &m) <= 1);

        let p = rand::Rng::random_range(&mut rng, 0..schema.parameters().len());
        let dir = if rand::Rng::random_bool(&mut rng, 0.5) { Direction::Positive } else { Direction::Negative };
        let d = mutate_directed(&schema, &a, MutationTarget::param(p), dir, &mut rng);
        prop_assert!(validate(&schema, &d).unwrap().is_ok());
        for i in 0..schema.parameters().len() {
            if i != p {
                prop_assert_eq!(a.value(i), d.value(i));
            }
        }

        let (c1, c2) = crossover_single_point(&schema, &a, &b, &mut rng).unwrap();
        prop_assert!(validate(&schema, &c1).unwrap().is_ok());
        prop_assert!(validate(&schema, &c2).unwrap().is_ok());
    }

    #[test]
    fn crossover_children_take_prefix_and_suffix(seed in any::<u64>(), cut in 1usize..4) {
        let schema = ConfigSchema::parking();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = generate_random(&schema, &mut rng).unwrap();
        let b = generate_random(&schema, &mut rng).unwrap();
        let (c1, c2) = crossover_at(&schema, &a, &b, cut).unwrap();
        if c1 != a || c2 != b {
            for i in 0..4 {
                let (x1, x2) = if i < cut { (a.value(i), b.value(i)) } else { (b.value(i), a.value(i)) };
                prop_assert_eq!(c1.value(i), x1);
                prop_assert_eq!(c2.value(i), x2);
            }
        }
    }

    #[test]
    fn decode_inverts_encode(seed in any::<u64>(), which in 0usize..3) {
        let schema = [ConfigSchema::parking(), ConfigSchema::perturbation(), ConfigSchema::trackgen()][which].clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = generate_random(&schema, &mut rng).unwrap();
        let fv = encode(&schema, &e).unwrap();
        prop_assert_eq!(fv.len(), schema.encoded_width());
        prop_assert_eq!(decode(&schema, &fv.0).unwrap(), e);
    }
}
