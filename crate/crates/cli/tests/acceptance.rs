//! End-to-end acceptance suite: one pass/fail line per criterion.
//!
//! Solver and loss criteria use random instances with independent oracles;
//! the experiment criteria run the committed configs.

use std::path::Path;
use std::time::Instant;

use ncl_cli::{run_experiment, run_seed, ExperimentConfig, SeedRun, VariantName};
use ncl_core::autodiff::{cross_entropy, grad_check, Graph, ParamStore, Tensor};
use ncl_core::compile::{linearize, soft, to_soft_violation, LinearSystem, LpVarKind, TNorm};
use ncl_core::eval::{make_report, median_of, RunRecord};
use ncl_core::infer::*;
use ncl_core::lang::{eval_ground, GroundProgram};
use ncl_core::random::{random_distribution, random_formula, random_ground_program, random_mask, ProgramShape};
use ncl_core::tasks::bio_transitions;
use ncl_core::train::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    id: u32,
    pass: bool,
    detail: String,
}

struct Suite {
    outcomes: Vec<Outcome>,
    records: Vec<RunRecord>,
    /// Violation rates of ILP and sequence-decoder runs, tagged by run.
    exact_runs: Vec<(String, f64, usize)>,
}

impl Suite {
    fn report(&mut self, id: u32, pass: bool, detail: String) {
        self.outcomes.push(Outcome { id, pass, detail });
    }

    fn runs(&mut self, cfg: &ExperimentConfig) -> Vec<SeedRun> {
        let runs: Vec<SeedRun> = cfg
            .run
            .seeds
            .iter()
            .map(|&s| run_seed(cfg, s).unwrap_or_else(|e| panic!("{} seed {s}: {e}", cfg.task.id)))
            .collect();
        for r in &runs {
            if r.record.infer_method != "none" {
                let tag = format!("{}/{}/seed{}", r.record.task, r.record.method_id(), r.record.seed);
                self.exact_runs.push((tag, r.eval.violation_rate, r.eval.constraints));
            }
            self.records.push(r.record.clone());
        }
        runs
    }

    fn median(&mut self, cfg: &ExperimentConfig, f: impl Fn(&SeedRun) -> f64) -> (f64, Vec<f64>) {
        let xs: Vec<f64> = self.runs(cfg).iter().map(f).collect();
        (median_of(&xs), xs)
    }
}

fn config(name: &str) -> ExperimentConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.toml"));
    let mut cfg = ExperimentConfig::load(&p).unwrap();
    cfg.run.seeds = SEEDS.to_vec();
    cfg
}

fn with(name: &str, train: TrainMethod, infer: InferMethod) -> ExperimentConfig {
    let mut cfg = config(name);
    cfg.method.train = train;
    cfg.method.infer = infer;
    cfg.train.method = train;
    cfg
}

fn pct(xs: &[f64]) -> String {
    let v: Vec<String> = xs.iter().map(|x| format!("{:.2}", 100.0 * x)).collect();
    v.join(",")
}

fn table(rng: &mut ChaCha8Rng, g: &GroundProgram) -> PredictionTable {
    PredictionTable::new(g.vars.iter().map(|v| random_distribution(rng, v.n_labels(), 0.0)).collect()).unwrap()
}

fn c1_sudoku_ilp(s: &mut Suite) {
    let mut cfg = with("sudoku9", TrainMethod::None, InferMethod::Ilp);
    cfg.train.epochs = 0;
    let t = Instant::now();
    let runs = s.runs(&cfg);
    let secs = t.elapsed().as_secs_f64();
    let solved = runs.iter().all(|r| r.eval.metric == 1.0 && r.eval.violated == 0);
    let proven = runs.iter().all(|r| r.eval.not_optimal == 0);
    let worst_ms = runs.iter().map(|r| r.eval.infer_ms_per_example).fold(0.0, f64::max);
    // each solve runs under the 60 s timeout, so a proof means it finished in time
    s.report(
        1,
        solved && proven && cfg.run.timeout_ms <= 60_000,
        format!("9x9 satisfaction 100%={solved} proven={proven} worst mean {worst_ms:.2} ms/puzzle, total {secs:.1}s"),
    );
}

fn c2_sudoku_learning(s: &mut Suite) {
    let sat = |r: &SeedRun| r.eval.metric;
    let (pd9, pd9s) = s.median(&with("sudoku9", TrainMethod::Pd, InferMethod::None), sat);
    let (sl9, sl9s) = s.median(&with("sudoku9", TrainMethod::SampL, InferMethod::None), sat);
    let (pd6, pd6s) = s.median(&with("sudoku6", TrainMethod::Pd, InferMethod::None), sat);
    let (sl6, sl6s) = s.median(&with("sudoku6", TrainMethod::SampL, InferMethod::None), sat);
    s.report(
        2,
        pd9 >= 0.91 && sl9 >= 0.82 && pd6 == 1.0 && sl6 == 1.0,
        format!(
            "9x9 pd {:.2}% [{}] sampl {:.2}% [{}]; 6x6 pd {:.2}% [{}] sampl {:.2}% [{}] (medians)",
            100.0 * pd9,
            pct(&pd9s),
            100.0 * sl9,
            pct(&sl9s),
            100.0 * pd6,
            pct(&pd6s),
            100.0 * sl6,
            pct(&sl6s)
        ),
    );
}

fn c3_digit_sum(s: &mut Suite) {
    let acc = |r: &SeedRun| r.eval.metric;
    let mut labels = with("digit_sum", TrainMethod::None, InferMethod::None);
    labels.method.direct_labels = true;
    let (lab, _) = s.median(&labels, acc);
    let mut parts = vec![format!("labels {:.2}", 100.0 * lab)];
    let mut close = true;
    for m in [TrainMethod::Pd, TrainMethod::SampL, TrainMethod::SemL] {
        let (v, xs) = s.median(&with("digit_sum", m, InferMethod::None), acc);
        close &= (v - lab).abs() * 100.0 <= 2.0;
        parts.push(format!("{} {:.2} [{}]", m.name(), 100.0 * v, pct(&xs)));
    }
    // without direct labels the unconstrained objective is empty
    let mut base = with("digit_sum", TrainMethod::None, InferMethod::None);
    base.train.epochs = 0;
    let (b, _) = s.median(&base, acc);
    base.method.infer = InferMethod::Ilp;
    let (bi, _) = s.median(&base, acc);
    parts.push(format!("none {:.2} none+ilp {:.2}", 100.0 * b, 100.0 * bi));
    s.report(3, close && b < 0.2 && bi < 0.2, parts.join(", "));
}

fn c4_ilp_exhaustive(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let shape = ProgramShape::default();
    let (mut agree, mut infeasible) = (0, 0);
    for _ in 0..1000 {
        let g = random_ground_program(&mut rng, &shape);
        let p = table(&mut rng, &g);
        match (exhaustive_map(&p, &g), ilp_map(&p, &linearize(&g))) {
            (Ok(e), Ok(i)) if i.stats.optimal && e.assignment == i.assignment && e.objective == i.objective => {
                agree += 1
            }
            (Err(InferError::Infeasible { .. }), Err(InferError::Infeasible { .. })) => infeasible += 1,
            _ => {}
        }
    }
    s.report(
        4,
        agree + infeasible == 1000,
        format!("{agree} identical optima + {infeasible} jointly infeasible of 1000"),
    );
}

fn c5_sequence(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ok = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=8);
        let k = rng.random_range(2..=5);
        let mut t = Transitions::new(random_mask(&mut rng, k, 0.6));
        t.start = (0..k).map(|_| rng.random_bool(0.8)).collect();
        let p = PredictionTable::new((0..n).map(|_| random_distribution(&mut rng, k, 0.0)).collect()).unwrap();
        let g = sequence_program(n, &t);
        match (viterbi_decode(&p, &t), astar_decode(&p, &t), exhaustive_map(&p, &g)) {
            (Ok(v), Ok(a), Ok(e))
                if v.objective == e.objective
                    && a.objective == e.objective
                    && t.accepts(&v.assignment)
                    && t.accepts(&a.assignment) =>
            {
                ok += 1
            }
            (Err(_), Err(_), Err(InferError::Infeasible { .. })) => ok += 1,
            _ => {}
        }
    }
    let bio = bio_transitions(4);
    let k = bio.start.len();
    let mut invalid = 0;
    for _ in 0..500 {
        let n = rng.random_range(1..=20);
        let p = PredictionTable::new((0..n).map(|_| random_distribution(&mut rng, k, 0.0)).collect()).unwrap();
        for sol in [viterbi_decode(&p, &bio).unwrap(), astar_decode(&p, &bio).unwrap()] {
            let a = &sol.assignment;
            invalid += (!a.is_empty() && !bio.start[a[0]]) as usize;
            invalid += a.windows(2).filter(|w| !bio.allowed[w[0]][w[1]]).count();
        }
    }
    let mut cfg = with("bio", TrainMethod::None, InferMethod::Viterbi);
    cfg.train.epochs = 2;
    let task_viol: f64 = s.runs(&cfg).iter().map(|r| r.eval.violation_rate).sum();
    s.report(
        5,
        ok == 500 && invalid == 0 && task_viol == 0.0,
        format!("{ok}/500 viterbi=astar=exhaustive; invalid BIO transitions: random {invalid}, task decoding {task_viol}"),
    );
}

fn c6_zero_violation(s: &mut Suite) {
    for task in ncl_core::tasks::TASK_NAMES {
        let mut cfg = with(task, TrainMethod::None, InferMethod::Ilp);
        cfg.train.epochs = 0;
        s.runs(&cfg);
    }
    let mut cfg = with("bio", TrainMethod::None, InferMethod::AStar);
    cfg.train.epochs = 2;
    s.runs(&cfg);
    let bad: Vec<&String> = s.exact_runs.iter().filter(|r| r.1 != 0.0 || r.2 == 0).map(|r| &r.0).collect();
    let checked: usize = s.exact_runs.iter().map(|r| r.2).sum();
    s.report(
        6,
        bad.is_empty(),
        format!("{} exact-inference runs, {checked} ground constraints, nonzero violation in {bad:?}", s.exact_runs.len()),
    );
}

fn c7_violation_reduction(s: &mut Suite) {
    let viol = |r: &SeedRun| r.eval.violation_rate;
    let mut pass = true;
    let mut parts = Vec::new();
    for task in ["bio", "entity_relation"] {
        let (b, _) = s.median(&with(task, TrainMethod::None, InferMethod::None), viol);
        let (pd, _) = s.median(&with(task, TrainMethod::Pd, InferMethod::None), viol);
        let (sl, _) = s.median(&with(task, TrainMethod::SampL, InferMethod::None), viol);
        pass &= pd < b && sl < b;
        parts.push(format!("{task} none {:.3}% pd {:.3}% sampl {:.3}%", 100.0 * b, 100.0 * pd, 100.0 * sl));
    }
    s.report(7, pass, parts.join("; "));
}

fn loss_grad_check(g: &GroundProgram, seed: u64, loss: impl Fn(&[Vec<f64>]) -> LossGrad) -> f64 {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let n: usize = g.vars.iter().map(|v| v.n_labels()).sum();
    let id = store.add("logits", Tensor::vector((0..n).map(|_| r.random_range(-1.0..1.0)).collect()));
    let segs: Vec<(usize, usize)> = g
        .vars
        .iter()
        .scan(0, |at, v| {
            let s = (*at, v.n_labels());
            *at += v.n_labels();
            Some(s)
        })
        .collect();
    grad_check(&mut store, 1e-6, |gr: &mut Graph, st: &ParamStore| {
        let x = gr.param(st, id);
        let p = gr.segment_softmax(x, &segs)?;
        let flat = gr.value(p).data.clone();
        let rows: Vec<Vec<f64>> = segs.iter().map(|&(a, k)| flat[a..a + k].to_vec()).collect();
        let lg = loss(&rows);
        gr.external(p, lg.value, lg.grad.concat())
    })
    .unwrap()
}

fn c8_losses(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let shape = ProgramShape {
        max_vars: 6,
        max_labels: 3,
        ..ProgramShape::default()
    };
    let mut worst_gap: f64 = 0.0;
    for _ in 0..500 {
        let g = random_ground_program(&mut rng, &shape);
        let probs: Vec<Vec<f64>> = g.vars.iter().map(|v| random_distribution(&mut rng, v.n_labels(), 0.01)).collect();
        let a = sampling_loss(&probs, &g, Sampling::Exhaustive, Grouping::Component, &mut rng).unwrap();
        let b = semantic_loss_exact(&probs, &g, DEFAULT_SEMANTIC_CAP).unwrap();
        worst_gap = worst_gap.max((a.value - b.value).abs());
    }
    let mut worst_grad: f64 = 0.0;
    for seed in 0..60 {
        let g = random_ground_program(&mut rng, &ProgramShape { max_vars: 4, ..ProgramShape::default() });
        let soft = to_soft_violation(&g, TNorm::Product).unwrap();
        let w: Vec<f64> = (0..g.constraints.len()).map(|_| rng.random_range(0.1..2.0)).collect();
        let checks = [
            loss_grad_check(&g, seed, |p| semantic_loss_exact(p, &g, DEFAULT_SEMANTIC_CAP).unwrap()),
            loss_grad_check(&g, seed, |p| {
                sampling_loss(p, &g, Sampling::Exhaustive, Grouping::PerConstraint, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
            }),
            loss_grad_check(&g, seed, |p| {
                sampling_loss(p, &g, Sampling::Draw(50), Grouping::Component, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
            }),
            loss_grad_check(&g, seed, |p| {
                let (v, grad) = soft.violation_grad(p, &w);
                LossGrad {
                    value: v.iter().zip(&w).map(|(v, w)| v * w).sum(),
                    grad,
                    terms: v.len(),
                    floored: 0,
                }
            }),
        ];
        worst_grad = checks.iter().copied().fold(worst_grad, f64::max);
    }
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::vector((0..12).map(|_| rng.random_range(-2.0..2.0)).collect()));
    let ce = grad_check(&mut store, 1e-6, |gr, st| {
        let v = gr.param(st, x);
        let m = gr.reshape(v, &[4, 3])?;
        cross_entropy(gr, m, &[0, 2, 1, 1])
    })
    .unwrap();
    worst_grad = worst_grad.max(ce);
    s.report(
        8,
        worst_gap <= 1e-9 && worst_grad <= 1e-4,
        format!("max |sampl - seml| {worst_gap:.2e} over 500 programs; max grad error {worst_grad:.2e}"),
    );
}

fn c9_vertices(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let n_labels: Vec<usize> = (0..4).map(|_| rng.random_range(2..=3)).collect();
        let f = random_formula(&mut rng, &n_labels, 5);
        let a: Vec<usize> = n_labels.iter().map(|&k| rng.random_range(0..k)).collect();
        let probs: Vec<Vec<f64>> = n_labels
            .iter()
            .zip(&a)
            .map(|(&k, &l)| (0..k).map(|j| (j == l) as u8 as f64).collect())
            .collect();
        let truth = f.eval(&a) as u8 as f64;
        for t in TNorm::ALL {
            let e = soft::soft_formulas(&[&f], t, soft::DEFAULT_EXPANSION_CAP).unwrap();
            mismatches += (e.sat(&probs)[0] != truth) as usize;
        }
    }
    s.report(9, mismatches == 0, format!("{mismatches} mismatches over 10000 formulas x 3 t-norms"));
}

/// Satisfying completions of the auxiliary columns for a fixed indicator
/// point, capped at 2.
fn completions(ls: &LinearSystem, point: &[u8]) -> usize {
    let n = ls.n_cols();
    let mut last = vec![Vec::new(); n];
    for (i, r) in ls.rows.iter().enumerate() {
        last[r.terms.iter().map(|t| t.0).max().unwrap_or(0)].push(i);
    }
    let mut x = vec![0u8; n];
    x[..point.len()].copy_from_slice(point);
    if !(0..point.len()).all(|c| last[c].iter().all(|&i| ls.rows[i].satisfied(&x))) {
        return 0;
    }
    fn dfs(ls: &LinearSystem, last: &[Vec<usize>], x: &mut Vec<u8>, c: usize) -> usize {
        if c == x.len() {
            return 1;
        }
        let mut total = 0;
        for v in 0..2u8 {
            x[c] = v;
            if last[c].iter().all(|&i| ls.rows[i].satisfied(x)) {
                total += dfs(ls, last, x, c + 1);
                if total >= 2 {
                    break;
                }
            }
        }
        x[c] = 0;
        total
    }
    dfs(ls, &last, &mut x, point.len())
}

fn c10_bijection(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let shape = ProgramShape {
        max_constraints: 3,
        max_atoms: 12,
        ..ProgramShape::default()
    };
    let (mut points, mut bad) = (0usize, 0usize);
    for _ in 0..300 {
        let g = random_ground_program(&mut rng, &shape);
        let ls = linearize(&g);
        let n: usize = g.vars.iter().map(|v| v.n_labels()).sum();
        bad += ls.vars[..n].iter().any(|v| !matches!(v.kind, LpVarKind::Indicator { .. })) as usize;
        for mask in 0u32..(1 << n) {
            let bits: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let mut a = Vec::new();
            let mut off = 0;
            for v in &g.vars {
                let chunk = &bits[off..off + v.n_labels()];
                off += v.n_labels();
                if chunk.iter().map(|&b| b as usize).sum::<usize>() == 1 {
                    a.push(chunk.iter().position(|&b| b == 1).unwrap());
                }
            }
            let expected = if a.len() == g.vars.len() {
                eval_ground(&g, &a).unwrap().iter().all(|&b| b) as usize
            } else {
                0
            };
            bad += (completions(&ls, &bits) != expected) as usize;
            points += 1;
        }
    }
    s.report(10, bad == 0, format!("{bad} mismatches over {points} indicator points of 300 programs"));
}

fn c11_timings(s: &mut Suite) {
    let infer = |r: &SeedRun| r.eval.infer_ms_per_example;
    let (plain, _) = s.median(&with("digit_exclusive", TrainMethod::None, InferMethod::None), infer);
    let (ilp, _) = s.median(&with("digit_exclusive", TrainMethod::None, InferMethod::Ilp), infer);
    let report = make_report(&s.records).unwrap();
    let timed = report.timings.len() == s.records.len()
        && report
            .timings
            .iter()
            .all(|t| t.train_ms_per_example.is_finite() && t.train_ms_per_example >= 0.0 && t.infer_ms_per_example > 0.0);
    s.report(
        11,
        timed && ilp < 10.0 * plain,
        format!(
            "{} runs timed={timed}; digit_exclusive infer {plain:.4} ms vs ilp {ilp:.4} ms ({:.1}x)",
            s.records.len(),
            ilp / plain
        ),
    );
}

fn c12_low_data(s: &mut Suite) {
    let f1 = |r: &SeedRun| r.eval.metric;
    let mut cfg = with("entity_relation", TrainMethod::None, InferMethod::None);
    cfg.model.variant = VariantName::Simple;
    cfg.run.data_fraction = 0.2;
    let (b, bs) = s.median(&cfg, f1);
    cfg.method.infer = InferMethod::Ilp;
    let (i, is) = s.median(&cfg, f1);
    s.report(
        12,
        i > b,
        format!("simple variant, 20% data: none {:.2} [{}] vs ilp {:.2} [{}]", 100.0 * b, pct(&bs), 100.0 * i, pct(&is)),
    );
}

fn c13_determinism(s: &mut Suite) {
    let dir = tempfile::tempdir().unwrap();
    let mut same = true;
    for name in ["digit_exclusive", "hierarchy"] {
        let mut a = config(name);
        a.run.out = dir.path().join(format!("{name}_a"));
        let mut b = a.clone();
        b.run.out = dir.path().join(format!("{name}_b"));
        b.run.jobs = 2;
        run_experiment(&a).unwrap();
        run_experiment(&b).unwrap();
        same &= std::fs::read(a.run.out.join("report.json")).unwrap() == std::fs::read(b.run.out.join("report.json")).unwrap();
    }
    s.report(13, same, format!("report.json byte-identical across re-runs: {same}"));
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let mut s = Suite {
        outcomes: Vec::new(),
        records: Vec::new(),
        exact_runs: Vec::new(),
    };
    c4_ilp_exhaustive(&mut s);
    c5_sequence(&mut s);
    c8_losses(&mut s);
    c9_vertices(&mut s);
    c10_bijection(&mut s);
    c1_sudoku_ilp(&mut s);
    c2_sudoku_learning(&mut s);
    c3_digit_sum(&mut s);
    c7_violation_reduction(&mut s);
    c12_low_data(&mut s);
    c11_timings(&mut s);
    c6_zero_violation(&mut s);
    c13_determinism(&mut s);

    s.outcomes.sort_by_key(|o| o.id);
    println!();
    for o in &s.outcomes {
        println!("criterion {:>2} {} {}", o.id, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    let failed: Vec<u32> = s.outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    println!("{} of {} criteria pass", s.outcomes.len() - failed.len(), s.outcomes.len());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
