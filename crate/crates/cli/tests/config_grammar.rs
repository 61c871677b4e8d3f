use proptest::prelude::*;
use riccomp::surface::Signature;
use riccomp_cli::config::{parse_config, print_config, Kind, OpSpec, ProfileSpec, ScalarSpec, Scenario, Value};
use riccomp_cli::presets;

fn real() -> impl Strategy<Value = f64> {
    prop_oneof![prop::num::f64::NORMAL, -10.0f64..10.0, Just(0.0)]
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![prop::num::f64::POSITIVE | prop::num::f64::NORMAL, 1e-3f64..100.0]
}

/// Operators that are self-adjoint for the standard Gram matrix of index `k`.
fn op(n: usize, k: usize) -> BoxedStrategy<OpSpec> {
    let diag = prop::collection::vec(real(), n).prop_map(OpSpec::Diag);
    let named = prop_oneof![Just(OpSpec::Zero), Just(OpSpec::Identity)];
    if k == 0 {
        let dense = prop::collection::vec(real(), n * n).prop_map(move |v| {
            OpSpec::Dense((0..n).map(|i| (0..n).map(|j| v[i.min(j) * n + i.max(j)]).collect()).collect())
        });
        prop_oneof![named, diag, dense].boxed()
    } else {
        prop_oneof![named, diag].boxed()
    }
}

fn profile(n: usize, k: usize) -> BoxedStrategy<ProfileSpec> {
    let steps = (prop::collection::vec(1e-3f64..1.0, 1..3), prop::collection::vec(op(n, k), 3)).prop_map(|(gaps, ops)| {
        let breaks: Vec<f64> = gaps.iter().scan(0.0, |acc, g| {
            *acc += g;
            Some(*acc)
        }).collect();
        let pieces = ops[..breaks.len() + 1].to_vec();
        ProfileSpec::Steps { breaks, pieces }
    });
    let preset = prop::sample::select(presets::PROFILE_PRESETS.iter().map(|p| p.0.to_string()).collect::<Vec<_>>()).prop_map(ProfileSpec::Preset);
    prop_oneof![op(n, k).prop_map(ProfileSpec::Constant), steps, preset].boxed()
}

fn riccati() -> impl Strategy<Value = Vec<(String, Value)>> {
    (1usize..4).prop_flat_map(|n| (Just(n), 0..=n)).prop_flat_map(|(n, k)| {
        (profile(n, k), op(n, k), positive(), prop::option::of(positive()), prop::option::of(1u64..500)).prop_map(
            move |(p, s0, t_end, atol, samples)| {
                let mut e = vec![
                    ("n".to_string(), Value::Int(n as u64)),
                    ("index".into(), Value::Int(k as u64)),
                    ("profile".into(), Value::Profile(p)),
                    ("initial".into(), Value::Op(s0)),
                    ("t_end".into(), Value::Real(t_end)),
                ];
                if let Some(a) = atol {
                    e.push(("atol".into(), Value::Real(a)));
                }
                if let Some(s) = samples {
                    e.push(("samples".into(), Value::Int(s)));
                }
                e
            },
        )
    })
}

fn calabi() -> impl Strategy<Value = Vec<(String, Value)>> {
    let k = prop_oneof![
        real().prop_map(ScalarSpec::Const),
        (0.0f64..5.0).prop_map(ScalarSpec::Step),
        (prop::collection::vec(0.1f64..1.0, 1..3), prop::collection::vec(0.0f64..1.0, 3)).prop_map(|(gaps, vals)| {
            let breaks: Vec<f64> = gaps.iter().scan(0.0, |acc, g| {
                *acc += g;
                Some(*acc)
            }).collect();
            let values = vals[..breaks.len() + 1].to_vec();
            ScalarSpec::Steps { breaks, values }
        }),
    ];
    (k, prop::option::of(positive())).prop_map(|(k, t_max)| {
        let mut e = vec![("k".to_string(), Value::Scalar(k))];
        if let Some(t) = t_max {
            e.push(("t_max".into(), Value::Real(t)));
        }
        e
    })
}

fn others() -> impl Strategy<Value = (Kind, Vec<(String, Value)>)> {
    let table1 = (1u64..=6, prop::option::of(real())).prop_map(|(row, k0)| {
        let mut e = vec![("row".to_string(), Value::Int(row))];
        if let Some(k) = k0 {
            e.push(("k0".into(), Value::Real(k)));
        }
        (Kind::Table1, e)
    });
    let gb = (0usize..4, any::<u64>(), 1u64..9, prop::collection::btree_set(1u64..1000, 1..5)).prop_map(|(s, seed, count, levels)| {
        (
            Kind::GaussBonnet,
            vec![
                ("signature".to_string(), Value::Sig(Signature::ALL[s])),
                ("seed".into(), Value::Int(seed)),
                ("count".into(), Value::Int(count)),
                ("levels".into(), Value::IntList(levels.into_iter().collect())),
            ],
        )
    });
    let ids: Vec<String> = riccomp::warped::registry_ids().into_iter().map(|(id, _)| id.to_string()).collect();
    let bound = (prop::sample::select(ids), real(), any::<bool>(), any::<u64>()).prop_map(|(m, b, most, seed)| {
        (
            Kind::CurvatureBound,
            vec![
                ("model".to_string(), Value::Text(m)),
                ("bound".into(), Value::Real(b)),
                ("direction".into(), Value::Text(if most { "at_most" } else { "at_least" }.into())),
                ("seed".into(), Value::Int(seed)),
            ],
        )
    });
    let suite = (prop::sample::select(presets::SUITES.to_vec()), any::<u64>()).prop_map(|(name, seed)| {
        (Kind::Suite, vec![("suite".to_string(), Value::Text(name.into())), ("seed".into(), Value::Int(seed))])
    });
    prop_oneof![table1, gb, bound, suite, riccati().prop_map(|e| (Kind::Riccati, e)), calabi().prop_map(|e| (Kind::Calabi, e))]
}

fn scenarios() -> impl Strategy<Value = Vec<Scenario>> {
    prop::collection::vec(others(), 0..6).prop_map(|items| {
        items.into_iter().enumerate().map(|(i, (kind, entries))| Scenario { id: format!("s{i}/{}", kind.name()), kind, entries }).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_then_parse_is_identity(s in scenarios()) {
        let text = print_config(&s);
        let back = parse_config(&text).map_err(|d| TestCaseError::fail(format!("{d:?}\n{text}")))?;
        prop_assert_eq!(back, s);
    }
}

#[test]
fn shipped_configs_round_trip() {
    for (name, _, text) in presets::SHIPPED {
        let parsed = parse_config(text).unwrap_or_else(|d| panic!("{name}: {d:?}"));
        assert!(!parsed.is_empty(), "{name}");
        assert_eq!(parse_config(&print_config(&parsed)).unwrap(), parsed, "{name}");
    }
}

#[test]
fn empty_file_gives_no_scenarios() {
    assert_eq!(parse_config("").unwrap(), vec![]);
}

#[test]
fn misspelled_key_is_reported_with_its_line() {
    let text = "# header\n[scenario x]\nkind = jacobi\nn = 2\nprofile = zero\nt_ned = 1\n";
    let diags = parse_config(text).unwrap_err();
    let d = diags.iter().find(|d| d.message.contains("t_ned")).expect("diagnostic for the typo");
    assert_eq!(d.line, 6);
    assert!(d.to_string().starts_with("line 6:"));
}

#[test]
fn non_positive_tolerances_are_rejected() {
    let text = "[scenario x]\nkind = calabi\nk = const(1)\ntolerance = 0\n";
    let diags = parse_config(text).unwrap_err();
    assert_eq!(diags[0].line, 4);
    let text = "[scenario x]\nkind = calabi\nk = const(1)\natol = -1e-9\n";
    assert_eq!(parse_config(text).unwrap_err()[0].line, 4);
}

#[test]
fn non_self_adjoint_operator_is_a_config_error() {
    // [[0, 1], [0, 0]] is not symmetric in the Euclidean plane.
    let text = "[scenario x]\nkind = riccati\nprofile = [[0, 1], [0, 0]]\ninitial = zero\nt_end = 1\n";
    let diags = parse_config(text).unwrap_err();
    assert!(diags[0].message.contains("profile"), "{diags:?}");
}

#[test]
fn colliding_output_names_are_rejected() {
    let text = "[scenario a/b]\nkind = table1\nrow = 1\n[scenario a__b]\nkind = table1\nrow = 2\n";
    let diags = parse_config(text).unwrap_err();
    assert_eq!(diags[0].line, 4);
}

#[test]
fn counterexample_config_is_one_riccati_scenario() {
    let s = parse_config(presets::shipped("paper_counterexample_1").unwrap()).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].kind, Kind::Riccati);
    assert_eq!(s[0].op("gram"), Some(&OpSpec::Diag(vec![1.0, -1.0])));
    assert_eq!(s[0].profile("profile"), Some(&ProfileSpec::Constant(OpSpec::Diag(vec![1.0, 0.0]))));
    assert_eq!(s[0].op("initial"), Some(&OpSpec::Zero));
}

#[test]
fn catalog_lists_models_presets_and_named_scenarios() {
    let c = presets::catalog();
    for needle in ["table1/row1", "paper_counterexample_det", "flaherty_check", "unit_step", "gauss_trace"] {
        assert!(c.contains(needle), "missing {needle}");
    }
    for line in c.lines().filter(|l| l.contains("paper_counterexample_det") || l.contains("flaherty_check")) {
        assert!(line.split_whitespace().count() > 2, "no description: {line}");
    }
}
