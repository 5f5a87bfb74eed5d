//! Two-level label hierarchy: every child class implies its parent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{mlp_head, parse_task_program, split3, Example, InputSpec, MetricKind, Readout, TaskInstance, VarSpec};

pub const N_PARENTS: usize = 5;
pub const N_CHILDREN: usize = 20;
const DIM: usize = 16;

pub fn parent_of(child: usize) -> usize {
    child / (N_CHILDREN / N_PARENTS)
}

const PROGRAM: &str = "domain Img;
domain P = 0..4;
domain C = 0..19;
pred parent(Img, P) categorical;
pred child(Img, C) categorical;
constraint subclass: forall i in Img, c in C: child(i, c) -> parent(i, c / 4);
";

/// `n` training points plus dev and test sets of `max(n / 4, 10)`.
/// Features are the parent centroid plus a child offset plus noise.
pub fn gen_hierarchy(n: usize, seed: u64) -> TaskInstance {
    assert!(n >= 40, "hierarchy needs at least 40 examples");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let vec = |scale: f64, rng: &mut ChaCha8Rng| (0..DIM).map(|_| scale * unit.sample(rng)).collect::<Vec<f64>>();
    let parents: Vec<Vec<f64>> = (0..N_PARENTS).map(|_| vec(1.5, &mut rng)).collect();
    let offsets: Vec<Vec<f64>> = (0..N_CHILDREN).map(|_| vec(0.8, &mut rng)).collect();
    let held = (n / 4).max(10);
    let mut examples = Vec::new();
    for size in [n, held, held] {
        let mut ys: Vec<usize> = (0..size).map(|i| i % N_CHILDREN).collect();
        ys.shuffle(&mut rng);
        for c in ys {
            let p = parent_of(c);
            let noise = vec(0.9, &mut rng);
            let x = (0..DIM).map(|k| parents[p][k] + offsets[c][k] + noise[k]).collect();
            examples.push(Example {
                inputs: vec![vec![x]],
                vars: vec![
                    VarSpec {
                        pred: "parent".into(),
                        args: vec![0],
                        head: 0,
                        col: 0,
                        label: Some(p),
                        supervised: true,
                    },
                    VarSpec {
                        pred: "child".into(),
                        args: vec![0],
                        head: 1,
                        col: 0,
                        label: Some(c),
                        supervised: true,
                    },
                ],
                bindings: Vec::new(),
                stratum: Some(c),
            });
        }
    }
    let (train, dev, test) = split3(examples, n, held);
    TaskInstance {
        name: "hierarchy".into(),
        program_text: PROGRAM.into(),
        program: parse_task_program("hierarchy", PROGRAM),
        train,
        dev,
        test,
        inputs: vec![InputSpec {
            domain: "Img".into(),
            width: DIM,
        }],
        row_bindings: Default::default(),
        simple: vec![mlp_head(0, &[DIM, N_PARENTS]), mlp_head(0, &[DIM, N_CHILDREN])],
        strong: vec![mlp_head(0, &[DIM, 32, N_PARENTS]), mlp_head(0, &[DIM, 32, N_CHILDREN])],
        metric: MetricKind::Accuracy,
        readouts: vec![
            Readout::Labels {
                pred: "parent".into(),
                classes: (0..N_PARENTS).collect(),
            },
            Readout::Labels {
                pred: "child".into(),
                classes: (0..N_CHILDREN).collect(),
            },
        ],
        transitions: None,
        metric_excludes: Vec::new(),
    }
}
