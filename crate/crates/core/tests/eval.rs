use ncl_core::compile::linearize;
use ncl_core::eval::*;
use ncl_core::infer::{ilp_map, IlpOptions, InferMethod, PredictionTable};
use ncl_core::lang::{ground_program, parse_program, Instance};
use ncl_core::random::{random_distribution, random_ground_program, ProgramShape};
use ncl_core::tasks::{gen_digit_exclusive, MetricKind, Variant};
use ncl_core::train::{train, Model, TrainConfig, TrainMethod};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn twelve_units() -> ncl_core::lang::GroundProgram {
    let p = parse_program("domain D = 0..11; pred p(D); constraint unit: forall d in D: p(d);").unwrap();
    ground_program(&p, &Instance::default()).unwrap()
}

#[test]
fn three_of_twelve_violated() {
    let g = twelve_units();
    assert_eq!(g.constraints.len(), 12);
    let mut a = vec![1; 12];
    a[0] = 0;
    a[5] = 0;
    a[11] = 0;
    assert_eq!(violation_rate(&a, &g).unwrap(), 0.25);
    assert_eq!(violation_counts(&a, &g, &["unit".into()]).unwrap(), (0, 0));
}

#[test]
fn empty_constraint_set_has_zero_violation() {
    let p = parse_program("domain D = 0..2; pred p(D);").unwrap();
    let mut inst = Instance::default();
    for d in 0..3 {
        inst.declare("p", vec![d]);
    }
    let g = ground_program(&p, &inst).unwrap();
    assert_eq!(violation_rate(&[0, 1, 0], &g).unwrap(), 0.0);
}

#[test]
fn partial_predictions_are_rejected() {
    let g = twelve_units();
    assert!(matches!(violation_rate(&[1; 11], &g), Err(EvalError::Partial { .. })));
    assert!(matches!(violation_rate(&[2; 12], &g), Err(EvalError::Label { .. })));
}

#[test]
fn accuracy_and_macro_f1() {
    assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
    assert_eq!(accuracy(&[], &[]).unwrap(), 0.0);
    // all-positive predictions against half-positive gold
    let f1 = macro_f1(&[1, 1, 1, 1], &[1, 1, 0, 0], &[0, 1]).unwrap();
    assert!((f1 - 1.0 / 3.0).abs() < 1e-12);
    assert!(matches!(accuracy(&[1], &[1, 2]), Err(EvalError::Length { .. })));
    assert!(matches!(macro_f1(&[1], &[], &[0, 1]), Err(EvalError::Length { .. })));
    // a class absent from both sides counts as 0
    assert_eq!(macro_f1(&[0, 0], &[0, 0], &[0, 1]).unwrap(), 0.5);
}

#[test]
fn constraint_satisfaction_reads_violation() {
    let v = task_metric(MetricKind::ConstraintSatisfaction, &[], &[], &[], 0.125).unwrap();
    assert_eq!(v, 0.875);
}

#[test]
fn noop_timing_is_cheap() {
    let mut calls = 0;
    let (out, t) = time_block(Phase::Infer, 1000, || {
        calls += 1;
        calls
    });
    assert_eq!(out, TIMING_REPEATS);
    assert_eq!(t.runs_ms.len(), TIMING_REPEATS);
    assert!(t.ms_per_example < 1.0);
    assert_eq!(t.phase, Phase::Infer);
}

#[test]
fn low_data_split() {
    let strata: Vec<Option<usize>> = (0..1000).map(|i| Some(i % 10)).collect();
    assert_eq!(split_low_data(&strata, 1.0, 3).unwrap(), (0..1000).collect::<Vec<_>>());
    let a = split_low_data(&strata, 0.05, 3).unwrap();
    assert_eq!(a.len(), 50);
    for c in 0..10 {
        assert_eq!(a.iter().filter(|&&i| i % 10 == c).count(), 5);
    }
    assert_eq!(a, split_low_data(&strata, 0.05, 3).unwrap());
    assert_ne!(a, split_low_data(&strata, 0.05, 4).unwrap());
    assert!(a.windows(2).all(|w| w[0] < w[1]));
    assert!(split_low_data(&strata, 0.0, 3).is_err());
    assert!(split_low_data(&strata, 1.5, 3).is_err());
}

#[test]
fn tiny_fraction_is_best_effort() {
    let strata: Vec<Option<usize>> = (0..40).map(|i| Some(i % 4)).collect();
    let a = split_low_data(&strata, 0.05, 0).unwrap();
    assert_eq!(a.len(), 2);
    let unlabeled = vec![None; 7];
    assert_eq!(split_low_data(&unlabeled, 0.01, 0).unwrap().len(), 1);
}

fn run(train_m: &str, infer_m: &str, seed: u64, value: f64) -> RunRecord {
    RunRecord {
        task: "t".into(),
        train_method: train_m.into(),
        infer_method: infer_m.into(),
        metric: "accuracy".into(),
        value,
        violation_rate: 0.1,
        train_ms_per_example: 1.0 + seed as f64,
        infer_ms_per_example: 0.5,
        data_fraction: 1.0,
        variant: "strong".into(),
        seed,
        fingerprint: "f".into(),
    }
}

#[test]
fn report_deltas() {
    assert!(matches!(make_report(&[]), Err(EvalError::NoRuns)));
    let r = make_report(&[run("none", "none", 0, 0.5)]).unwrap();
    assert_eq!(r.rows[0].delta, Some(0.0));
    assert_eq!(r.summary[0].delta, Some(0.0));
    assert!(r.rows[0].headline);

    let r = make_report(&[run("pd", "none", 0, 0.75), run("none", "none", 0, 0.5)]).unwrap();
    let pd = r.rows.iter().find(|x| x.method == "pd").unwrap();
    assert_eq!(pd.delta, Some(0.25));

    let r = make_report(&[run("pd", "ilp", 0, 0.75)]).unwrap();
    assert_eq!(r.rows[0].method, "pd+ilp");
    assert_eq!(r.rows[0].delta, None);
    assert!(r.to_text().contains("n/a"));
}

#[test]
fn report_is_byte_stable() {
    let runs = vec![
        run("none", "none", 0, 0.5),
        run("sampl", "ilp", 1, 0.8),
        run("none", "none", 1, 0.6),
        run("sampl", "ilp", 0, 0.7),
    ];
    let mut rev = runs.clone();
    rev.reverse();
    let a = make_report(&runs).unwrap();
    let b = make_report(&rev).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_text(), b.to_text());
    // timings vary between runs and stay out of the JSON
    let mut slow = runs.clone();
    slow[0].train_ms_per_example = 99.0;
    assert_eq!(make_report(&slow).unwrap().to_json(), a.to_json());
    let s = a.summary.iter().find(|s| s.method == "sampl+ilp").unwrap();
    assert_eq!(s.seeds, 2);
    assert!((s.value - 0.75).abs() < 1e-12);
    assert!((s.delta.unwrap() - 0.2).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    write_report(&a, dir.path()).unwrap();
    for f in ["report.json", "report.txt", "timings.json"] {
        assert!(dir.path().join(f).exists());
    }
}

#[test]
fn fingerprint_tracks_config_and_program() {
    let a = fingerprint("{\"lr\":0.1}", "pred p(D);");
    assert_eq!(a.len(), 64);
    assert_eq!(a, fingerprint("{\"lr\":0.1}", "pred p(D);"));
    assert_ne!(a, fingerprint("{\"lr\":0.2}", "pred p(D);"));
    assert_ne!(a, fingerprint("{\"lr\":0.1}", "pred q(D);"));
}

#[test]
fn ilp_decoding_of_a_trained_model_never_violates() {
    let task = gen_digit_exclusive(60, 2);
    let mut model = Model::build(task.model_spec(Variant::Simple), 2).unwrap();
    let cfg = TrainConfig {
        epochs: 2,
        method: TrainMethod::None,
        ..TrainConfig::default()
    };
    train(&mut model, &task.data(&task.train, false), &cfg).unwrap();
    let opts = IlpOptions::default();
    let ilp = evaluate(&task, &model, &task.test, InferMethod::Ilp, &opts).unwrap();
    assert_eq!(ilp.violation_rate, 0.0);
    assert_eq!(ilp.not_optimal, 0);
    assert!(ilp.constraints > 0);
    let base = evaluate(&task, &model, &task.test, InferMethod::None, &opts).unwrap();
    assert!((0.0..=1.0).contains(&base.metric));
    assert!((0.0..=1.0).contains(&base.violation_rate));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn feasible_ilp_solutions_have_zero_violation(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_ground_program(&mut rng, &ProgramShape::default());
        let probs = PredictionTable::new(g.vars.iter().map(|v| random_distribution(&mut rng, v.n_labels(), 0.0)).collect()).unwrap();
        if let Ok(s) = ilp_map(&probs, &linearize(&g)) {
            prop_assert_eq!(violation_rate(&s.assignment, &g).unwrap(), 0.0);
        }
    }

    #[test]
    fn metrics_are_fractions(pairs in prop::collection::vec((0usize..4, 0usize..4), 0..40)) {
        let (p, g): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let a = accuracy(&p, &g).unwrap();
        let f = macro_f1(&p, &g, &[0, 1, 2, 3]).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((0.0..=1.0).contains(&f));
    }
}
