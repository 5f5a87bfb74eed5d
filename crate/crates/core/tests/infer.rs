use std::time::Duration;

use ncl_core::compile::{linearize, write_lp};
use ncl_core::infer::*;
use ncl_core::lang::{eval_ground, ground_program, parse_program, GroundProgram, Instance};
use ncl_core::random::{random_distribution, random_ground_program, random_mask, ProgramShape};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn table(rows: &[&[f64]]) -> PredictionTable {
    PredictionTable::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

fn random_table(rng: &mut ChaCha8Rng, g: &GroundProgram) -> PredictionTable {
    PredictionTable::new(g.vars.iter().map(|v| random_distribution(rng, v.n_labels(), 0.0)).collect()).unwrap()
}

/// O, B-X, I-X, B-Y, I-Y
fn bio2() -> Transitions {
    let k = 5;
    let mut t = Transitions::all(k);
    for p in 0..k {
        for l in [2, 4] {
            // I-t may only follow B-t or I-t
            t.allowed[p][l] = p == l - 1 || p == l;
        }
    }
    t.start[2] = false;
    t.start[4] = false;
    t
}

#[test]
fn exclusivity_picks_the_argmax() {
    let p = parse_program("domain L = {a, b}; pred y(L); exactly(1){y(l) for l in L};").unwrap();
    let g = ground_program(&p, &Instance::default()).unwrap();
    // two boolean indicators with p(true) 0.7 and 0.3
    let probs = table(&[&[0.3, 0.7], &[0.7, 0.3]]);
    let s = ilp_map(&probs, &linearize(&g)).unwrap();
    assert_eq!(s.assignment, vec![1, 0]);
    assert!(s.stats.optimal);
}

#[test]
fn bio_ilp_repairs_an_invalid_pair() {
    let t = bio2();
    let g = sequence_program(2, &t);
    // (O, I-X) is the unconstrained argmax
    let probs = table(&[&[0.6, 0.25, 0.05, 0.05, 0.05], &[0.1, 0.1, 0.5, 0.2, 0.1]]);
    assert_eq!(probs.argmax(), vec![0, 2]);
    let ilp = ilp_map(&probs, &linearize(&g)).unwrap();
    let ex = exhaustive_map(&probs, &g).unwrap();
    assert_eq!(ilp.assignment, ex.assignment);
    assert_eq!(ilp.objective, ex.objective);
    assert!(t.accepts(&ilp.assignment));
}

#[test]
fn four_by_four_sudoku_completes() {
    let p = parse_program(
        "domain R = 0..3; domain C = 0..3; domain V = 1..4; domain B = 0..3; domain I = 0..3;
         pred cell(R, C, V) categorical;
         free gr in R; free gc in C; free gv in V;
         constraint row: forall r in R, v in V: exactly(1){cell(r, c, v) for c in C};
         constraint col: forall c in C, v in V: exactly(1){cell(r, c, v) for r in R};
         constraint block: forall b in B, v in V: exactly(1){cell(2 * (b / 2) + i / 2, 2 * (b % 2) + i % 2, v) for i in I};
         constraint given: cell(gr, gc, gv);",
    )
    .unwrap();
    let mut inst = Instance::default();
    for (r, c, v) in [(0i64, 0i64, 1i64), (1, 2, 1), (2, 1, 3), (3, 3, 2)] {
        inst.add_row("given", [("gr", r.into()), ("gc", c.into()), ("gv", v.into())]);
    }
    let g = ground_program(&p, &inst).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let probs = PredictionTable::new(
        (0..16)
            .map(|_| {
                let mut d = random_distribution(&mut rng, 4, 0.2);
                let s: f64 = d.iter().sum();
                d.iter_mut().for_each(|x| *x /= s);
                d
            })
            .collect(),
    )
    .unwrap();
    let s = ilp_map(&probs, &linearize(&g)).unwrap();
    assert!(s.stats.optimal);
    assert!(eval_ground(&g, &s.assignment).unwrap().iter().all(|&b| b));
    let again = ilp_map(&probs, &linearize(&g)).unwrap();
    assert_eq!((s.assignment, s.objective), (again.assignment, again.objective));
}

#[test]
fn viterbi_without_constraints_is_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rows: Vec<Vec<f64>> = (0..6).map(|_| random_distribution(&mut rng, 4, 0.0)).collect();
    let probs = PredictionTable::new(rows).unwrap();
    let s = viterbi_decode(&probs, &Transitions::all(4)).unwrap();
    assert_eq!(s.assignment, probs.argmax());
}

#[test]
fn bio_decoders_never_emit_invalid_transitions() {
    let t = bio2();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let n = rng.random_range(1..=10);
        let probs = PredictionTable::new((0..n).map(|_| random_distribution(&mut rng, 5, 0.0)).collect()).unwrap();
        let v = viterbi_decode(&probs, &t).unwrap();
        let a = astar_decode(&probs, &t).unwrap();
        assert_eq!(t.invalid_transitions(&v.assignment), 0);
        assert_eq!(t.invalid_transitions(&a.assignment), 0);
        assert_eq!(v.objective, a.objective);
    }
}

#[test]
fn astar_single_position_expands_one_node() {
    let probs = table(&[&[0.2, 0.5, 0.3]]);
    let s = astar_decode(&probs, &Transitions::all(3)).unwrap();
    assert_eq!(s.assignment, vec![1]);
    assert_eq!(s.stats.nodes, 1);
}

#[test]
fn empty_language_is_infeasible() {
    let probs = table(&[&[0.5, 0.5], &[0.5, 0.5]]);
    let t = Transitions::new(vec![vec![false, false], vec![false, false]]);
    assert!(matches!(astar_decode(&probs, &t), Err(InferError::Infeasible { .. })));
    assert!(matches!(viterbi_decode(&probs, &t), Err(InferError::Infeasible { .. })));
}

#[test]
fn exhaustive_without_constraints_is_argmax() {
    let p = parse_program("domain D = 0..3; domain L = 0..2; pred y(D, L) categorical;").unwrap();
    let mut inst = Instance::default();
    for d in 0..4 {
        inst.declare("y", vec![d]);
    }
    let g = ground_program(&p, &inst).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let probs = random_table(&mut rng, &g);
    assert_eq!(exhaustive_map(&probs, &g).unwrap().assignment, probs.argmax());
}

#[test]
fn unsatisfiable_program_is_infeasible_everywhere() {
    let p = parse_program("domain D = 0..1; pred p(D); p(0) & !p(0);").unwrap();
    let g = ground_program(&p, &Instance::default()).unwrap();
    let probs = table(&[&[0.5, 0.5]]);
    assert!(matches!(exhaustive_map(&probs, &g), Err(InferError::Infeasible { .. })));
    assert!(matches!(ilp_map(&probs, &linearize(&g)), Err(InferError::Infeasible { .. })));
}

#[test]
fn space_cap_is_enforced() {
    let p = parse_program("domain D = 0..29; pred p(D);").unwrap();
    let mut inst = Instance::default();
    for d in 0..30 {
        inst.declare("p", vec![d]);
    }
    let g = ground_program(&p, &inst).unwrap();
    let probs = PredictionTable::new(vec![vec![0.5, 0.5]; 30]).unwrap();
    assert!(matches!(exhaustive_map(&probs, &g), Err(InferError::SpaceTooLarge { .. })));
}

#[test]
fn zero_timeout_reports_incumbent_or_timeout() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let shape = ProgramShape {
        max_vars: 40,
        max_labels: 4,
        max_constraints: 30,
        max_depth: 3,
        max_atoms: usize::MAX,
    };
    let g = random_ground_program(&mut rng, &shape);
    let probs = random_table(&mut rng, &g);
    let opts = IlpOptions {
        timeout: Duration::ZERO,
    };
    match ilp_map_with(&probs, &linearize(&g), &opts) {
        Ok(s) => assert!(!s.stats.optimal || s.stats.nodes < 512),
        Err(e) => assert!(matches!(e, InferError::Timeout { .. } | InferError::Infeasible { .. })),
    }
}

#[test]
fn table_rejects_non_distributions_and_clamps() {
    assert!(PredictionTable::new(vec![vec![0.5, 0.6]]).is_err());
    let t = PredictionTable::new(vec![vec![1.0, 0.0]]).unwrap();
    assert_eq!(t.probs()[0][1], PROB_FLOOR);
    assert!(t.log_probs()[0][1].is_finite());
}

#[test]
fn solve_from_lp_text_and_csv() {
    let p = parse_program("domain L = {a, b, c}; pred y(L); atmost(1){y(l) for l in L}; y(a) | y(c);").unwrap();
    let g = ground_program(&p, &Instance::default()).unwrap();
    let ls = ncl_core::compile::read_lp(&write_lp(&linearize(&g))).unwrap();
    let csv = "variable,label,prob\ny(a),false,0.4\ny(a),true,0.6\ny(b),false,0.1\ny(b),true,0.9\ny(c),0,0.3\ny(c),1,0.7\n";
    let probs = read_probs_csv(csv, &ls).unwrap();
    let s = ilp_map(&probs, &ls).unwrap();
    assert_eq!(s.assignment, vec![0, 0, 1]);
    let bad = "y(a),true,0.6\n";
    assert!(matches!(read_probs_csv(bad, &ls), Err(InferError::Csv { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn ilp_agrees_with_exhaustive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shape = ProgramShape { max_vars: 5, max_labels: 3, max_constraints: 4, max_depth: 3, max_atoms: usize::MAX };
        let g = random_ground_program(&mut rng, &shape);
        let probs = random_table(&mut rng, &g);
        let ex = exhaustive_map(&probs, &g);
        let ilp = ilp_map(&probs, &linearize(&g));
        match (ex, ilp) {
            (Ok(e), Ok(i)) => {
                prop_assert!(i.stats.optimal);
                prop_assert_eq!(e.assignment, i.assignment);
                prop_assert_eq!(e.objective, i.objective);
            }
            (Err(InferError::Infeasible { .. }), Err(InferError::Infeasible { .. })) => {}
            (e, i) => prop_assert!(false, "exhaustive {:?} vs ilp {:?}", e, i),
        }
    }

    #[test]
    fn decoders_agree_with_exhaustive(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=6);
        let k = rng.random_range(2..=5);
        let mut t = Transitions::new(random_mask(&mut rng, k, 0.6));
        t.start = (0..k).map(|_| rng.random_bool(0.8)).collect();
        let probs = PredictionTable::new((0..n).map(|_| random_distribution(&mut rng, k, 0.0)).collect()).unwrap();
        let g = sequence_program(n, &t);
        let v = viterbi_decode(&probs, &t);
        let a = astar_decode(&probs, &t);
        let e = exhaustive_map(&probs, &g);
        match (v, a, e) {
            (Ok(v), Ok(a), Ok(e)) => {
                prop_assert_eq!(v.objective, a.objective);
                prop_assert_eq!(v.objective, e.objective);
                prop_assert!(t.accepts(&v.assignment) && t.accepts(&a.assignment));
            }
            (Err(_), Err(_), Err(InferError::Infeasible { .. })) => {}
            (v, a, e) => prop_assert!(false, "{:?} / {:?} / {:?}", v, a, e),
        }
    }
}
