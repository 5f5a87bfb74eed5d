//! Sentence-pair inference with consistency rules across related pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{mlp_head, parse_task_program, split3, BindingRow, Example, InputSpec, MetricKind, Readout, TaskInstance, VarSpec};
use crate::lang::BindingValue;

pub const NLI_LABELS: [&str; 3] = ["ent", "con", "neu"];
const ENT: usize = 0;
const CON: usize = 1;
const NEU: usize = 2;
const TOPICS: usize = 6;
const DIM: usize = 8;

const PROGRAM: &str = "domain P;
domain L = {ent, con, neu};
pred rel(P, L) categorical;
free p, q, r in P;
constraint reflexive: rel(p, ent);
constraint symmetry: rel(p, con) -> rel(q, con);
constraint ent_inverse: rel(p, ent) -> !rel(q, con);
constraint neu_inverse: rel(p, neu) -> !rel(q, con);
constraint transitivity: (rel(p, ent) & rel(q, ent)) -> rel(r, ent);
";

#[derive(Clone, Copy)]
struct Sentence {
    topic: usize,
    positive: bool,
    specific: bool,
}

/// A specific claim entails the general one of the same topic and sign;
/// opposite signs on one topic contradict; anything else is neutral.
fn relation(x: Sentence, y: Sentence) -> usize {
    if x.topic != y.topic {
        NEU
    } else if x.positive != y.positive {
        CON
    } else if x.specific >= y.specific {
        ENT
    } else {
        NEU
    }
}

/// `n` groups of three sentences a, b, c, each contributing the pairs
/// (a,b), (b,a), (a,a), (b,c), (a,c). Dev and test hold `max(n / 5, 10)`
/// groups.
pub fn gen_consistency_pairs(n: usize, seed: u64) -> TaskInstance {
    assert!(n >= 10, "consistency pairs need at least 10 groups");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let topics: Vec<Vec<f64>> = (0..TOPICS).map(|_| (0..DIM).map(|_| unit.sample(&mut rng)).collect()).collect();
    let spec_dir: Vec<f64> = (0..DIM).map(|_| unit.sample(&mut rng)).collect();
    let held = (n / 5).max(10);
    let mut examples = Vec::new();
    for _ in 0..n + 2 * held {
        let sentence = |rng: &mut ChaCha8Rng, near: Option<Sentence>| Sentence {
            topic: match near {
                Some(s) if rng.random_bool(0.75) => s.topic,
                _ => rng.random_range(0..TOPICS),
            },
            positive: rng.random_bool(0.5),
            specific: rng.random_bool(0.5),
        };
        let a = sentence(&mut rng, None);
        let b = sentence(&mut rng, Some(a));
        let c = sentence(&mut rng, Some(b));
        let feat = |s: Sentence, rng: &mut ChaCha8Rng| -> Vec<f64> {
            let sign = if s.positive { 1.0 } else { -1.0 };
            (0..DIM)
                .map(|k| sign * topics[s.topic][k] + s.specific as u8 as f64 * spec_dir[k] + 0.3 * unit.sample(rng))
                .collect()
        };
        let fs = [feat(a, &mut rng), feat(b, &mut rng), feat(c, &mut rng)];
        let ss = [a, b, c];
        let pairs = [(0, 1), (1, 0), (0, 0), (1, 2), (0, 2)];
        let rows = pairs
            .iter()
            .map(|&(x, y)| {
                let mut v = fs[x].clone();
                v.extend_from_slice(&fs[y]);
                v.extend(fs[x].iter().zip(&fs[y]).map(|(p, q)| p * q));
                v
            })
            .collect();
        let labels: Vec<usize> = pairs.iter().map(|&(x, y)| relation(ss[x], ss[y])).collect();
        let int = |i: i64| BindingValue::Int(i);
        let mut bindings = vec![BindingRow::new("reflexive", [("p", int(2))])];
        for name in ["symmetry", "ent_inverse", "neu_inverse"] {
            bindings.push(BindingRow::new(name, [("p", int(0)), ("q", int(1))]));
            bindings.push(BindingRow::new(name, [("p", int(1)), ("q", int(0))]));
        }
        bindings.push(BindingRow::new("transitivity", [("p", int(0)), ("q", int(3)), ("r", int(4))]));
        examples.push(Example {
            inputs: vec![rows],
            vars: labels
                .iter()
                .enumerate()
                .map(|(i, &l)| VarSpec {
                    pred: "rel".into(),
                    args: vec![i as i64],
                    head: 0,
                    col: 0,
                    label: Some(l),
                    supervised: true,
                })
                .collect(),
            bindings,
            stratum: Some(labels[0]),
        });
    }
    let (train, dev, test) = split3(examples, n, held);
    TaskInstance {
        name: "consistency".into(),
        program_text: PROGRAM.into(),
        program: parse_task_program("consistency", PROGRAM),
        train,
        dev,
        test,
        inputs: vec![InputSpec {
            domain: "P".into(),
            width: 3 * DIM,
        }],
        row_bindings: [("p".to_string(), 0), ("q".to_string(), 0), ("r".to_string(), 0)].into(),
        simple: vec![mlp_head(0, &[3 * DIM, 3])],
        strong: vec![mlp_head(0, &[3 * DIM, 32, 3])],
        metric: MetricKind::Accuracy,
        readouts: vec![Readout::Labels {
            pred: "rel".into(),
            classes: vec![ENT, CON, NEU],
        }],
        transitions: None,
        metric_excludes: Vec::new(),
    }
}
