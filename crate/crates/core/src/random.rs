//! Random ground programs and sequence instances for property tests,
//! benchmarks, and the acceptance suite.

use rand::Rng;

use crate::lang::{CountKind, DecisionVar, GroundConstraint, GroundFormula, GroundProgram};

#[derive(Debug, Clone, Copy)]
pub struct ProgramShape {
    pub max_vars: usize,
    /// Labels per variable are drawn from `2..=max_labels`.
    pub max_labels: usize,
    pub max_constraints: usize,
    pub max_depth: usize,
    /// Upper bound on Σ labels over variables (indicator count).
    pub max_atoms: usize,
}

impl Default for ProgramShape {
    fn default() -> Self {
        ProgramShape {
            max_vars: 5,
            max_labels: 3,
            max_constraints: 4,
            max_depth: 3,
            max_atoms: usize::MAX,
        }
    }
}

pub fn random_vars<R: Rng>(rng: &mut R, shape: &ProgramShape) -> Vec<DecisionVar> {
    let n = rng.random_range(1..=shape.max_vars.max(1));
    let mut vars = Vec::with_capacity(n);
    let mut atoms = 0;
    for i in 0..n {
        let mut k = rng.random_range(2..=shape.max_labels.max(2));
        if atoms + k > shape.max_atoms {
            k = 2;
            if atoms + k > shape.max_atoms {
                break;
            }
        }
        atoms += k;
        let categorical = k > 2 || rng.random_bool(0.3);
        let labels = if categorical {
            (0..k).map(|l| l.to_string()).collect()
        } else {
            vec!["false".into(), "true".into()]
        };
        vars.push(DecisionVar {
            name: format!("v({i})"),
            pred: "v".into(),
            args: vec![i as i64],
            categorical,
            labels,
        });
    }
    vars
}

/// Random formula over the given label counts, depth ≤ `depth`.
pub fn random_formula<R: Rng>(rng: &mut R, n_labels: &[usize], depth: usize) -> GroundFormula {
    let leaf = |rng: &mut R| {
        if rng.random_bool(0.05) {
            return GroundFormula::Const(rng.random_bool(0.5));
        }
        let var = rng.random_range(0..n_labels.len());
        GroundFormula::lit(var, rng.random_range(0..n_labels[var]))
    };
    if depth == 0 || rng.random_bool(0.25) {
        return leaf(rng);
    }
    let kids = |rng: &mut R, lo: usize, hi: usize| -> Vec<GroundFormula> {
        let n = rng.random_range(lo..=hi);
        (0..n).map(|_| random_formula(rng, n_labels, depth - 1)).collect()
    };
    match rng.random_range(0..7) {
        0 => GroundFormula::not(random_formula(rng, n_labels, depth - 1)),
        1 => GroundFormula::And(kids(rng, 2, 3)),
        2 => GroundFormula::Or(kids(rng, 2, 3)),
        3 => GroundFormula::implies(
            random_formula(rng, n_labels, depth - 1),
            random_formula(rng, n_labels, depth - 1),
        ),
        4 => GroundFormula::iff(
            random_formula(rng, n_labels, depth - 1),
            random_formula(rng, n_labels, depth - 1),
        ),
        _ => {
            let elems = kids(rng, 1, 4);
            let kind = [CountKind::Exactly, CountKind::AtMost, CountKind::AtLeast][rng.random_range(0..3)];
            let k = rng.random_range(0..=elems.len());
            GroundFormula::Count { kind, k, elems }
        }
    }
}

pub fn random_ground_program<R: Rng>(rng: &mut R, shape: &ProgramShape) -> GroundProgram {
    let vars = random_vars(rng, shape);
    let n_labels: Vec<usize> = vars.iter().map(|v| v.n_labels()).collect();
    let n_cons = rng.random_range(0..=shape.max_constraints);
    let constraints = (0..n_cons)
        .map(|i| {
            let formula = random_formula(rng, &n_labels, shape.max_depth);
            GroundConstraint {
                template: "r".into(),
                index: i,
                weight: None,
                bindings: Vec::new(),
                scope: formula.vars(),
                formula,
            }
        })
        .collect();
    GroundProgram { vars, constraints }
}

/// Random label distribution with every entry at least `floor`.
pub fn random_distribution<R: Rng>(rng: &mut R, k: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    let spare = 1.0 - floor * k as f64;
    raw.iter().map(|r| floor + spare * r / s).collect()
}

/// Random transition mask over `k` labels with each entry allowed with
/// probability `density`.
pub fn random_mask<R: Rng>(rng: &mut R, k: usize, density: f64) -> Vec<Vec<bool>> {
    (0..k).map(|_| (0..k).map(|_| rng.random_bool(density)).collect()).collect()
}
