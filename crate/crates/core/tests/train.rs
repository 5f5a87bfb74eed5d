use ncl_core::autodiff::{grad_check, Activation, Graph, OptimizerKind, ParamStore, Tensor};
use ncl_core::lang::{ground_program, parse_program, ConstraintProgram, GroundProgram, Instance};
use ncl_core::random::{random_distribution, random_ground_program, ProgramShape};
use ncl_core::train::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ground(src: &str) -> GroundProgram {
    ground_program(&parse_program(src).unwrap(), &Instance::default()).unwrap()
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

const SINGLE: &str = "domain D = 0..0; pred p(D); p(0);";

#[test]
fn multiplier_step_is_eta_times_violation() {
    let g = ground(SINGLE);
    let mut m = Multipliers::new(MultiplierMode::PerTemplate, 0.1);
    m.ascend(&g.constraints, &[0.5]);
    assert!((m.get(&g.constraints[0]) - 0.05).abs() < 1e-15);
    let before = m.clone();
    m.ascend(&g.constraints, &[0.0]);
    assert_eq!(m, before);
}

#[test]
fn per_template_multipliers_average_their_grounds() {
    let g = ground("domain D = 0..1; pred p(D); constraint c: forall x in D: p(x);");
    let mut t = Multipliers::new(MultiplierMode::PerTemplate, 1.0);
    t.ascend(&g.constraints, &[0.2, 0.6]);
    assert_eq!(t.values.len(), 1);
    assert!((t.get(&g.constraints[0]) - 0.4).abs() < 1e-15);
    let mut p = Multipliers::new(MultiplierMode::PerGround, 1.0);
    p.ascend(&g.constraints, &[0.2, 0.6]);
    assert_eq!(p.values.len(), 2);
    assert_eq!(p.get(&g.constraints[1]), 0.6);
}

#[test]
fn sampling_loss_on_a_single_atom() {
    let g = ground(SINGLE);
    let l = sampling_loss(&[vec![0.2, 0.8]], &g, Sampling::Exhaustive, Grouping::PerConstraint, &mut rng()).unwrap();
    assert!((l.value - 0.2231435513142097).abs() < 1e-12, "{}", l.value);
    assert!((l.value + 0.8f64.ln()).abs() < 1e-15);
}

#[test]
fn tautology_costs_nothing() {
    let g = ground("domain D = 0..0; pred p(D); p(0) | !p(0);");
    let probs = [vec![0.3, 0.7]];
    for grouping in [Grouping::PerConstraint, Grouping::Component] {
        let l = sampling_loss(&probs, &g, Sampling::Draw(100), grouping, &mut rng()).unwrap();
        assert_eq!(l.value, 0.0);
        assert!(l.grad.iter().flatten().all(|&x| x == 0.0));
    }
    assert_eq!(semantic_loss_exact(&probs, &g, DEFAULT_SEMANTIC_CAP).unwrap().value, 0.0);
}

const DIGIT_SUM: &str = "domain I = 0..1; domain D = 0..9; domain S = 0..18; pred digit(I, D) categorical;
free s in S;
constraint sum: exists m in D where m <= s & s - m <= 9: digit(0, m) & digit(1, s - m);";

fn digit_sum(s: i64) -> GroundProgram {
    let p = parse_program(DIGIT_SUM).unwrap();
    let mut inst = Instance::default();
    inst.declare("digit", vec![0]);
    inst.declare("digit", vec![1]);
    inst.add_row("sum", [("s", s.into())]);
    ground_program(&p, &inst).unwrap()
}

#[test]
fn semantic_loss_of_a_digit_sum() {
    let g = digit_sum(1);
    let uniform = vec![vec![0.1; 10]; 2];
    let l = semantic_loss_exact(&uniform, &g, DEFAULT_SEMANTIC_CAP).unwrap();
    // (0, 1) and (1, 0) out of 100 equally likely pairs
    assert!((l.value + 0.02f64.ln()).abs() < 1e-12, "{}", l.value);
    // explicit sum P(S = s) = Σ_k P(D1 = k) P(D2 = s − k)
    let mut r = rng();
    let probs = vec![random_distribution(&mut r, 10, 0.0), random_distribution(&mut r, 10, 0.0)];
    for s in [0i64, 4, 9, 13, 18] {
        let mass: f64 = (0..10)
            .filter(|&k| (0..10).contains(&(s - k)))
            .map(|k| probs[0][k as usize] * probs[1][(s - k) as usize])
            .sum();
        let l = semantic_loss_exact(&probs, &digit_sum(s), DEFAULT_SEMANTIC_CAP).unwrap();
        assert!((l.value + mass.ln()).abs() < 1e-9, "s={s}");
    }
}

#[test]
fn unsatisfiable_constraints_hit_the_floor() {
    let g = ground("domain D = 0..0; pred p(D); p(0) & !p(0);");
    let probs = [vec![0.5, 0.5]];
    let floor = -EPS_FLOOR.ln();
    let s = sampling_loss(&probs, &g, Sampling::Draw(10), Grouping::PerConstraint, &mut rng()).unwrap();
    assert!((s.value - floor).abs() < 1e-12);
    assert_eq!(s.floored, 1);
    let e = semantic_loss_exact(&probs, &g, DEFAULT_SEMANTIC_CAP).unwrap();
    assert!((e.value - floor).abs() < 1e-12);
}

#[test]
fn semantic_loss_refuses_large_spaces() {
    let src = "domain D = 0..29; pred p(D); atleast(1){p(x) for x in D};";
    let g = ground(src);
    let probs = vec![vec![0.5, 0.5]; 30];
    assert!(matches!(
        semantic_loss_exact(&probs, &g, DEFAULT_SEMANTIC_CAP),
        Err(TrainError::SpaceTooLarge { .. })
    ));
    assert!(sampling_loss(&probs, &g, Sampling::Draw(100), Grouping::PerConstraint, &mut rng()).is_ok());
}

fn loss_grad_check(g: &GroundProgram, seed: u64, loss: impl Fn(&[Vec<f64>]) -> LossGrad) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let n: usize = g.vars.iter().map(|v| v.n_labels()).sum();
    let id = store.add("logits", Tensor::vector((0..n).map(|_| r.random_range(-1.0..1.0)).collect()));
    let mut segs = Vec::new();
    let mut at = 0;
    for v in &g.vars {
        segs.push((at, v.n_labels()));
        at += v.n_labels();
    }
    grad_check(&mut store, 1e-6, |gr: &mut Graph, s: &ParamStore| {
        let x = gr.param(s, id);
        let p = gr.segment_softmax(x, &segs)?;
        let flat = gr.value(p).data.clone();
        let mut rows = Vec::new();
        let mut at = 0;
        for (_, k) in &segs {
            rows.push(flat[at..at + k].to_vec());
            at += k;
        }
        let lg = loss(&rows);
        gr.external(p, lg.value, lg.grad.concat())
    })
    .unwrap()
}

#[test]
fn losses_pass_gradient_checks() {
    let shape = ProgramShape {
        max_vars: 4,
        max_labels: 3,
        max_constraints: 3,
        max_depth: 3,
        max_atoms: usize::MAX,
    };
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    for seed in 0..40 {
        let g = random_ground_program(&mut r, &shape);
        let cap = DEFAULT_SEMANTIC_CAP;
        let worst = [
            loss_grad_check(&g, seed, |p| semantic_loss_exact(p, &g, cap).unwrap()),
            loss_grad_check(&g, seed, |p| {
                sampling_loss(p, &g, Sampling::Exhaustive, Grouping::PerConstraint, &mut rng()).unwrap()
            }),
            loss_grad_check(&g, seed, |p| {
                sampling_loss(p, &g, Sampling::Exhaustive, Grouping::Component, &mut rng()).unwrap()
            }),
        ];
        for w in worst {
            assert!(w <= 1e-4, "seed {seed}: {w}\n{}", g.to_text());
        }
        checked += 1;
    }
    assert_eq!(checked, 40);
    let g = digit_sum(7);
    let w = loss_grad_check(&g, 3, |p| {
        sampling_loss(p, &g, Sampling::Draw(100), Grouping::PerConstraint, &mut rng()).unwrap()
    });
    assert!(w <= 1e-4, "{w}");
}

/// Chain rule through softmax: `p_j (g_j − Σ_k p_k g_k)`.
fn logit_grad(p: &[f64], g: &[f64]) -> Vec<f64> {
    let m: f64 = p.iter().zip(g).map(|(p, g)| p * g).sum();
    p.iter().zip(g).map(|(p, g)| p * (g - m)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn exhaustive_sampling_equals_semantic_loss(seed in any::<u64>()) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let shape = ProgramShape { max_vars: 6, max_labels: 3, max_constraints: 4, max_depth: 3, max_atoms: usize::MAX };
        let g = random_ground_program(&mut r, &shape);
        prop_assert!(g.space_size() <= 729);
        let probs: Vec<Vec<f64>> = g.vars.iter().map(|v| random_distribution(&mut r, v.n_labels(), 0.01)).collect();
        let a = sampling_loss(&probs, &g, Sampling::Exhaustive, Grouping::Component, &mut r).unwrap();
        let b = semantic_loss_exact(&probs, &g, DEFAULT_SEMANTIC_CAP).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9, "{} vs {}", a.value, b.value);
        // gradients agree up to a per-row constant, so compare them through softmax
        for ((p, ga), gb) in probs.iter().zip(&a.grad).zip(&b.grad) {
            let (x, y) = (logit_grad(p, ga), logit_grad(p, gb));
            for (x, y) in x.iter().zip(&y) {
                prop_assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()), "{} vs {}\n{}", x, y, g.to_text());
            }
        }
    }

    #[test]
    fn multipliers_stay_nonnegative(viols in prop::collection::vec(0.0f64..1.0, 1..20), eta in 0.0f64..1.0) {
        let g = ground("domain D = 0..0; pred p(D); constraint c: p(0);");
        let mut m = Multipliers::new(MultiplierMode::PerTemplate, eta);
        let mut last = 0.0;
        for v in viols {
            m.ascend(&g.constraints, &[v]);
            let now = m.get(&g.constraints[0]);
            prop_assert!(now >= 0.0 && now >= last);
            last = now;
        }
    }
}

/// Points in the plane labeled by quadrant-ish rule into 3 classes, with a
/// constraint forbidding class 2 everywhere.
struct Toy {
    program: ConstraintProgram,
    x: Vec<[f64; 2]>,
    y: Vec<usize>,
    labeled: usize,
}

impl Toy {
    fn new(n: usize, labeled: usize) -> Toy {
        let mut r = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<[f64; 2]> = (0..n).map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]).collect();
        let y = x.iter().map(|p| (p[0] > 0.0) as usize).collect();
        let program = parse_program(
            "domain I = 0..63; domain L = 0..2; pred y(I, L) categorical;
             constraint never2: forall i in I: !y(i, 2);",
        )
        .unwrap();
        Toy { program, x, y, labeled }
    }
}

impl BatchSource for Toy {
    fn len(&self) -> usize {
        self.x.len()
    }

    fn batch(&self, ex: &[usize]) -> Result<Batch, TrainError> {
        let mut inst = Instance::default();
        for i in 0..ex.len() {
            inst.declare("y", vec![i as i64]);
        }
        let (program, skipped) = ground_batch(&self.program, &inst)?;
        Ok(Batch {
            inputs: vec![Tensor::from_rows(&ex.iter().map(|&e| self.x[e].to_vec()).collect::<Vec<_>>()).unwrap()],
            program,
            offsets: (0..ex.len()).map(|i| 3 * i).collect(),
            targets: ex.iter().map(|&e| (e < self.labeled).then_some(self.y[e])).collect(),
            skipped,
            ids: None,
        })
    }
}

fn toy_config(method: TrainMethod) -> TrainConfig {
    TrainConfig {
        optimizer: OptimizerKind::Adam,
        lr: 0.05,
        batch_size: 16,
        epochs: 15,
        seed: 9,
        method,
        ..TrainConfig::default()
    }
}

fn toy_model() -> Model {
    Model::mlp(&[2, 8, 3], Activation::Tanh, 1).unwrap()
}

#[test]
fn zero_multipliers_reproduce_plain_training() {
    let data = Toy::new(64, 32);
    let mut a = toy_model();
    let mut b = toy_model();
    let ra = train(&mut a, &data, &toy_config(TrainMethod::None)).unwrap();
    let cfg = TrainConfig {
        eta_lambda: 0.0,
        ..toy_config(TrainMethod::Pd)
    };
    let rb = train(&mut b, &data, &cfg).unwrap();
    for (p, q) in a.store.params().iter().zip(b.store.params()) {
        let pb: Vec<u64> = p.value.data.iter().map(|v| v.to_bits()).collect();
        let qb: Vec<u64> = q.value.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(pb, qb, "{}", p.name);
    }
    for (x, y) in ra.trace.iter().zip(&rb.trace) {
        assert_eq!(x.task_loss.to_bits(), y.task_loss.to_bits());
    }
    assert!(rb.multipliers.unwrap().values.values().all(|&l| l == 0.0));
}

#[test]
fn training_is_deterministic() {
    let data = Toy::new(64, 32);
    for method in [TrainMethod::None, TrainMethod::Pd, TrainMethod::SampL, TrainMethod::SemL] {
        let mut a = toy_model();
        let mut b = toy_model();
        let ra = train(&mut a, &data, &toy_config(method)).unwrap();
        let rb = train(&mut b, &data, &toy_config(method)).unwrap();
        assert_eq!(a.store, b.store, "{}", method.name());
        assert_eq!(ra.trace.len(), rb.trace.len());
    }
}

#[test]
fn constraint_losses_remove_violations_from_unlabeled_data() {
    // only 4 labeled points, so class 2 is never pushed down by supervision
    let data = Toy::new(64, 0);
    for method in [TrainMethod::Pd, TrainMethod::SampL, TrainMethod::SemL] {
        let mut m = toy_model();
        let cfg = TrainConfig {
            eta_lambda: 1.0,
            epochs: 30,
            ..toy_config(method)
        };
        let out = train(&mut m, &data, &cfg).unwrap();
        let first = out.trace.first().unwrap().violation_rate;
        let b = data.batch(&(0..64).collect::<Vec<_>>()).unwrap();
        let last = argmax_violation(&predict(&m, &b).unwrap(), &b.program);
        assert!(last < first || first == 0.0, "{}: {first} -> {last}", method.name());
        assert_eq!(last, 0.0, "{}", method.name());
    }
}

#[test]
fn multipliers_grow_while_violated() {
    let data = Toy::new(64, 0);
    let mut m = toy_model();
    let cfg = TrainConfig {
        eta_lambda: 0.5,
        epochs: 2,
        ..toy_config(TrainMethod::Pd)
    };
    let out = train(&mut m, &data, &cfg).unwrap();
    assert!(out.multipliers.unwrap().values["never2"] > 0.0);
}

#[test]
fn constraints_outside_the_batch_are_skipped() {
    let p = parse_program("domain I = 0..3; pred y(I); constraint c: forall i in I where i < 3: y(i) -> y(i + 1);").unwrap();
    let mut inst = Instance::default();
    inst.declare("y", vec![0]);
    inst.declare("y", vec![1]);
    let (g, skipped) = ground_batch(&p, &inst).unwrap();
    assert_eq!(g.vars.len(), 2);
    assert_eq!(g.constraints.len(), 1);
    assert_eq!(skipped, 2);
}

#[test]
fn trace_lines_are_json() {
    let data = Toy::new(32, 32);
    let mut m = toy_model();
    let out = train(&mut m, &data, &TrainConfig { epochs: 3, ..toy_config(TrainMethod::SampL) }).unwrap();
    let mut buf = Vec::new();
    write_trace_jsonl(&out.trace, &mut buf).unwrap();
    let lines: Vec<serde_json::Value> =
        String::from_utf8(buf).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for key in ["epoch", "task_loss", "constraint_loss", "violation_rate", "ms"] {
        assert!(lines[2].get(key).is_some(), "{key}");
    }
    assert!(out.trace[2].task_loss < out.trace[0].task_loss);
}

#[test]
fn non_finite_parameters_abort_training() {
    let data = Toy::new(32, 32);
    let mut m = toy_model();
    let id = m.store.ids().next().unwrap();
    m.store.value_mut(id).data[0] = f64::NAN;
    let snapshot = m.store.clone();
    let err = train(&mut m, &data, &toy_config(TrainMethod::None)).unwrap_err();
    assert!(matches!(err, TrainError::Diverged { epoch: 0 }));
    assert_eq!(m.store.params()[1], snapshot.params()[1]);
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        TrainConfig { n_samples: 0, ..TrainConfig::default() },
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
        TrainConfig { eta_lambda: -1.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(cfg.validate(), Err(TrainError::Config(_))));
    }
    let cfg: TrainConfig = serde_json::from_str(r#"{"method": "sampl", "n_samples": 7}"#).unwrap();
    assert_eq!((cfg.method, cfg.n_samples, cfg.eta_lambda), (TrainMethod::SampL, 7, 0.01));
}
