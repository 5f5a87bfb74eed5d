//! Facts about entities linked by positive and negative implications.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{mlp_head, parse_task_program, split3, BindingRow, Example, InputSpec, MetricKind, Readout, TaskInstance, VarSpec};
use crate::lang::BindingValue;

const DIM: usize = 16;
const N_TRAIN: usize = 240;
const N_HELD: usize = 80;

/// Edge `from → to`; positive edges read ¬F₁ ∨ F₂, negative ¬F₁ ∨ ¬F₂.
#[derive(Debug, Clone, Copy)]
struct Edge {
    from: usize,
    to: usize,
    positive: bool,
}

/// Truth values implied by base values, or `None` when a fact is forced
/// both ways.
fn propagate(base: &[bool], edges: &[Edge]) -> Option<Vec<bool>> {
    let mut v = base.to_vec();
    // edges run from lower to higher index, so one pass in index order settles
    for j in 0..v.len() {
        let (mut yes, mut no) = (false, false);
        for e in edges.iter().filter(|e| e.to == j && v[e.from]) {
            if e.positive {
                yes = true;
            } else {
                no = true;
            }
        }
        match (yes, no) {
            (true, true) => return None,
            (true, false) => v[j] = true,
            (false, true) => v[j] = false,
            _ => {}
        }
    }
    Some(v)
}

/// Random DAG over `n_facts` facts and 400 entities (240 train, 80 dev,
/// 80 test) whose features are a noisy projection of their fact values.
pub fn gen_implication_graph(n_facts: usize, seed: u64) -> TaskInstance {
    assert!(n_facts >= 10, "implication graph needs at least 10 facts");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p_edge = (2.5 / n_facts as f64).min(1.0);
    let mut edges = Vec::new();
    for i in 0..n_facts {
        for j in i + 1..n_facts {
            if rng.random_bool(p_edge) {
                edges.push(Edge {
                    from: i,
                    to: j,
                    positive: rng.random_bool(0.5),
                });
            }
        }
    }
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let scale = 1.0 / (n_facts as f64).sqrt();
    let proj: Vec<Vec<f64>> = (0..DIM)
        .map(|_| (0..n_facts).map(|_| scale * unit.sample(&mut rng)).collect())
        .collect();
    let program_text = format!(
        "domain E;
domain F = 0..{};
pred fact(E, F);
free e in E;
free i, j in F;
constraint pos: fact(e, i) -> fact(e, j);
constraint neg: fact(e, i) -> !fact(e, j);
",
        n_facts - 1
    );
    let int = |i: usize| BindingValue::Int(i as i64);
    let bindings: Vec<BindingRow> = edges
        .iter()
        .map(|e| {
            BindingRow::new(
                if e.positive { "pos" } else { "neg" },
                [("e", BindingValue::Int(0)), ("i", int(e.from)), ("j", int(e.to))],
            )
        })
        .collect();
    let examples: Vec<Example> = (0..N_TRAIN + 2 * N_HELD)
        .map(|_| {
            let truth = (0..100)
                .find_map(|_| {
                    let base: Vec<bool> = (0..n_facts).map(|_| rng.random_bool(0.35)).collect();
                    propagate(&base, &edges)
                })
                .unwrap_or_else(|| vec![false; n_facts]);
            let x = proj
                .iter()
                .map(|row| {
                    let s: f64 = row.iter().zip(&truth).map(|(w, &t)| w * if t { 1.0 } else { -1.0 }).sum();
                    s + 0.5 * unit.sample(&mut rng)
                })
                .collect();
            Example {
                inputs: vec![vec![x]],
                vars: truth
                    .iter()
                    .enumerate()
                    .map(|(f, &t)| VarSpec {
                        pred: "fact".into(),
                        args: vec![0, f as i64],
                        head: 0,
                        col: 2 * f,
                        label: Some(t as usize),
                        supervised: true,
                    })
                    .collect(),
                bindings: bindings.clone(),
                stratum: None,
            }
        })
        .collect();
    let (train, dev, test) = split3(examples, N_TRAIN, N_HELD);
    TaskInstance {
        name: "implication".into(),
        program: parse_task_program("implication", &program_text),
        program_text,
        train,
        dev,
        test,
        inputs: vec![InputSpec {
            domain: "E".into(),
            width: DIM,
        }],
        row_bindings: [("e".to_string(), 0)].into(),
        simple: vec![mlp_head(0, &[DIM, 2 * n_facts])],
        strong: vec![mlp_head(0, &[DIM, 64, 2 * n_facts])],
        metric: MetricKind::MacroF1,
        readouts: vec![Readout::Labels {
            pred: "fact".into(),
            classes: vec![0, 1],
        }],
        transitions: None,
        metric_excludes: Vec::new(),
    }
}
