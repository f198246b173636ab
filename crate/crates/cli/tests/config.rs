use resist_core::runner::{Recording, StepSchedule};
use resist_core::screening::ScreeningRule;
use resist_sim::config::{
    parse_suite, to_toml, ComparisonMode, GraphSpec, ObjectiveSpec, StepSpec,
};
use resist_sim::SimError;

const TEXT: &str = r#"
[suite]
mode = "h_vs_half"
seeds = [1, 2]

[run.quad]
graph = { kind = "complete", nodes = 6 }
b = 1
j = 4
t_max = 80
step = { kind = "constant", h = 0.2 }
attack = { kind = "dynamic", count = 2, strategy = "sign_flip" }
objective = { kind = "quadratic", targets = "random", dim = 3, scale = 2.0 }

[run.logit]
graph = { kind = "complete", nodes = 8 }
b = 1
j = 3
t_max = 30
rule = "median"
tie = "seeded"
step = { kind = "diminishing", p = 0.5, omega = 0.6 }
attack = { kind = "static", links = [[0, 1], [2, 3]], strategy = "constant", constant = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0] }
objective = { kind = "logistic", classes = 2, dim = 2, samples_per_node = 10, partition = "moderate" }
record = false
"#;

#[test]
fn round_trip_is_idempotent() {
    let parsed = parse_suite(TEXT).unwrap();
    assert_eq!(parsed.suite.mode, ComparisonMode::HVsHalf);
    assert_eq!(parsed.run.len(), 2);
    let once = to_toml(&parsed).unwrap();
    let reparsed = parse_suite(&once).unwrap();
    assert_eq!(reparsed, parsed);
    assert_eq!(to_toml(&reparsed).unwrap(), once);
}

#[test]
fn defaults_are_filled() {
    let s = parse_suite(TEXT).unwrap();
    let q = &s.run["quad"];
    assert_eq!(q.init_radius, 1.0);
    assert!(q.record);
    assert!(q.byzantine.is_empty());
    assert_eq!(q.graph, GraphSpec::Complete { nodes: 6 });
    assert_eq!(q.step.halved().unwrap(), StepSpec::Constant { h: 0.1 });
    assert!(q.objective.quadrupled().is_err());
    let l = &s.run["logit"];
    match l.objective.quadrupled().unwrap() {
        ObjectiveSpec::Logistic {
            samples_per_node, ..
        } => assert_eq!(samples_per_node, 40),
        o => panic!("{o:?}"),
    }
    let empty = parse_suite("").unwrap();
    assert!(empty.run.is_empty());
    assert_eq!(empty.suite.seeds, vec![0]);
}

#[test]
fn build_produces_valid_runs() {
    let s = parse_suite(TEXT).unwrap();
    let here = std::path::Path::new(".");
    let q = s.run["quad"].build("quad", 1, here).unwrap();
    assert_eq!(q.config.recording, Recording::Blocks);
    assert_eq!(q.config.schedule, StepSchedule::Constant(0.2));
    assert_eq!(q.objectives.len(), 6);
    assert_eq!(q.w_star.len(), 3);
    let l = s.run["logit"].build("logit", 1, here).unwrap();
    assert_eq!(l.config.rule, ScreeningRule::Median);
    assert_eq!(l.config.recording, Recording::Off);
    assert_eq!(l.config.attack.links_per_round(), 2);
    // same seed, same build
    let again = s.run["logit"].build("logit", 1, here).unwrap();
    assert_eq!(again.w_star, l.w_star);
}

#[test]
fn bad_configs_are_config_errors() {
    let cases = [
        "[run.a]\nb = 1\n",
        "[suite]\nmode = \"sideways\"\n",
        "[suite]\nbogus = 1\n",
    ];
    for text in cases {
        assert!(
            matches!(parse_suite(text), Err(SimError::Config(_))),
            "{text}"
        );
    }
    let mut s = parse_suite(TEXT).unwrap();
    let run = s.run.get_mut("quad").unwrap();
    run.b = 3;
    let err = run
        .build("quad", 0, std::path::Path::new("."))
        .err()
        .unwrap();
    assert_eq!(err.exit_code(), 2);
    run.b = 1;
    run.graph = GraphSpec::EdgeList {
        path: "missing.txt".into(),
    };
    let err = run
        .build("quad", 0, std::path::Path::new("/nonexistent"))
        .err()
        .unwrap();
    assert_eq!(err.exit_code(), 3, "{err}");
}

mod round_trip {
    use proptest::prelude::*;
    use resist_sim::config::*;

    fn graph() -> impl Strategy<Value = GraphSpec> {
        prop_oneof![
            (3usize..20).prop_map(|nodes| GraphSpec::Complete { nodes }),
            (3usize..20, 0.0f64..=1.0)
                .prop_map(|(nodes, rho)| GraphSpec::ErdosRenyi { nodes, rho }),
            "[a-z]{1,8}\\.txt".prop_map(|p| GraphSpec::EdgeList { path: p.into() }),
        ]
    }

    fn step() -> impl Strategy<Value = StepSpec> {
        prop_oneof![
            (1e-6f64..10.0).prop_map(|h| StepSpec::Constant { h }),
            (1e-6f64..10.0, 0.5f64..1.0).prop_map(|(p, omega)| StepSpec::Diminishing { p, omega }),
            (1usize..1000).prop_map(|steps| StepSpec::FixedHorizon { steps }),
        ]
    }

    fn objective() -> impl Strategy<Value = ObjectiveSpec> {
        prop_oneof![
            (any::<bool>(), 1usize..6, 0.0f64..1.0, 0.1f64..5.0).prop_map(
                |(same, dim, l2, scale)| {
                    ObjectiveSpec::Quadratic {
                        targets: if same {
                            TargetMode::Identical
                        } else {
                            TargetMode::Random
                        },
                        dim,
                        l2,
                        scale,
                    }
                }
            ),
            (
                2usize..5,
                1usize..4,
                1usize..100,
                prop::collection::vec(0usize..10, 0..3)
            )
                .prop_map(|(classes, dim, samples_per_node, flipped)| {
                    ObjectiveSpec::Logistic {
                        classes,
                        dim,
                        samples_per_node,
                        l2: 0.01,
                        separation: 2.0,
                        spread: 1.0,
                        partition: PartitionName::Extreme,
                        flipped,
                    }
                }),
            Just(ObjectiveSpec::PlSine),
            Just(ObjectiveSpec::PlPair),
        ]
    }

    fn attack() -> impl Strategy<Value = AttackSpec> {
        (
            0usize..3,
            0usize..10,
            prop::collection::vec((0usize..9, 0usize..9).prop_map(|(a, b)| [a, b]), 0..4),
            prop::option::of(0.1f64..1e3),
        )
            .prop_map(|(kind, count, links, range)| AttackSpec {
                kind: [AttackKind::None, AttackKind::Dynamic, AttackKind::Static][kind],
                count,
                links,
                strategy: StrategyName::Random,
                range,
                constant: None,
            })
    }

    fn run() -> impl Strategy<Value = RunSpec> {
        (
            graph(),
            0usize..3,
            attack(),
            step(),
            objective(),
            2usize..20,
            1usize..5000,
            any::<bool>(),
            prop::option::of(1usize..10),
        )
            .prop_map(
                |(graph, b, attack, step, objective, j, t_max, record, stride)| RunSpec {
                    graph,
                    b,
                    attack,
                    byzantine: vec![],
                    rule: RuleName::Cwtm,
                    tie: TieName::Seeded,
                    j,
                    step,
                    t_max,
                    init_radius: 1.0,
                    objective,
                    record,
                    stride,
                    dump_phi: false,
                },
            )
    }

    proptest! {
        #[test]
        fn serialize_parse_is_identity(
            runs in prop::collection::btree_map("[a-z][a-z0-9_]{0,6}", run(), 0..4),
            seeds in prop::collection::vec(0..=i64::MAX as u64, 1..4),
            mode in 0usize..4,
        ) {
            let suite = SuiteFile {
                suite: SuiteSection {
                    mode: [ComparisonMode::Single, ComparisonMode::ResistVsDgd, ComparisonMode::HVsHalf, ComparisonMode::NVs4n][mode],
                    seeds,
                    consensus_tol: 1e-10,
                },
                run: runs,
            };
            let text = to_toml(&suite).unwrap();
            let back = parse_suite(&text).unwrap();
            prop_assert_eq!(&back, &suite);
            prop_assert_eq!(to_toml(&back).unwrap(), text);
        }
    }
}
