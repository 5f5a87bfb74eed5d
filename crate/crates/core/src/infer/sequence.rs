//! Decoding of label sequences under an allowed-transition mask.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{InferError, MapSolution, PredictionTable, SolverStats};
use crate::lang::{DecisionVar, GroundConstraint, GroundFormula, GroundProgram};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transitions {
    /// `allowed[prev][next]`.
    pub allowed: Vec<Vec<bool>>,
    /// Labels permitted at the first position.
    pub start: Vec<bool>,
}

impl Transitions {
    pub fn all(k: usize) -> Transitions {
        Transitions {
            allowed: vec![vec![true; k]; k],
            start: vec![true; k],
        }
    }

    pub fn new(allowed: Vec<Vec<bool>>) -> Transitions {
        let k = allowed.len();
        Transitions {
            allowed,
            start: vec![true; k],
        }
    }

    pub fn n_labels(&self) -> usize {
        self.allowed.len()
    }

    /// Whether every adjacent pair and the first label are allowed.
    pub fn accepts(&self, seq: &[usize]) -> bool {
        seq.first().is_none_or(|&l| self.start[l]) && seq.windows(2).all(|w| self.allowed[w[0]][w[1]])
    }

    /// Number of disallowed adjacent pairs (and a disallowed start).
    pub fn invalid_transitions(&self, seq: &[usize]) -> usize {
        let start = seq.first().is_some_and(|&l| !self.start[l]) as usize;
        start + seq.windows(2).filter(|w| !self.allowed[w[0]][w[1]]).count()
    }
}

fn check(probs: &PredictionTable, t: &Transitions) -> Result<(), InferError> {
    let k = t.n_labels();
    if t.allowed.iter().any(|r| r.len() != k) || t.start.len() != k {
        return Err(InferError::Mismatch("transition mask is not square".into()));
    }
    if (0..probs.len()).any(|i| probs.n_labels(i) != k) {
        return Err(InferError::Mismatch(format!("every position needs {k} labels")));
    }
    Ok(())
}

/// Exact dynamic program over positions.
pub fn viterbi_decode(probs: &PredictionTable, t: &Transitions) -> Result<MapSolution, InferError> {
    check(probs, t)?;
    let start = Instant::now();
    let n = probs.len();
    let k = t.n_labels();
    if n == 0 {
        return Ok(MapSolution {
            assignment: Vec::new(),
            objective: 0.0,
            stats: SolverStats { nodes: 0, ms: 0.0, optimal: true },
        });
    }
    let lp = probs.log_probs();
    let ninf = f64::NEG_INFINITY;
    let mut score: Vec<f64> = (0..k).map(|l| if t.start[l] { lp[0][l] } else { ninf }).collect();
    let mut back = vec![vec![usize::MAX; k]; n];
    for i in 1..n {
        let mut next = vec![ninf; k];
        for l in 0..k {
            for p in 0..k {
                if t.allowed[p][l] && score[p] > ninf && score[p] + lp[i][l] > next[l] {
                    next[l] = score[p] + lp[i][l];
                    back[i][l] = p;
                }
            }
        }
        score = next;
    }
    let mut last = None;
    for l in 0..k {
        if score[l] > ninf && last.is_none_or(|b: usize| score[l] > score[b]) {
            last = Some(l);
        }
    }
    let Some(mut l) = last else {
        return Err(InferError::Infeasible { nodes: (n * k) as u64 });
    };
    let mut seq = vec![0; n];
    for i in (0..n).rev() {
        seq[i] = l;
        l = back[i][l];
    }
    Ok(MapSolution {
        objective: probs.score(&seq),
        assignment: seq,
        stats: SolverStats {
            nodes: (n * k) as u64,
            ms: start.elapsed().as_secs_f64() * 1e3,
            optimal: true,
        },
    })
}

struct Entry {
    f: f64,
    g: f64,
    prefix: Vec<usize>,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    /// Highest f first, then deeper prefixes, then lexicographically smaller.
    fn cmp(&self, o: &Self) -> Ordering {
        self.f
            .total_cmp(&o.f)
            .then(self.prefix.len().cmp(&o.prefix.len()))
            .then_with(|| o.prefix.cmp(&self.prefix))
    }
}

/// Best-first search over prefixes; the heuristic adds each remaining
/// position's best log-probability.
pub fn astar_decode(probs: &PredictionTable, t: &Transitions) -> Result<MapSolution, InferError> {
    check(probs, t)?;
    let start = Instant::now();
    let n = probs.len();
    let k = t.n_labels();
    let lp = probs.log_probs();
    let mut h = vec![0.0; n + 1];
    for i in (0..n).rev() {
        h[i] = h[i + 1] + lp[i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    }
    let mut closed = vec![vec![false; k]; n];
    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        f: h[0],
        g: 0.0,
        prefix: Vec::new(),
    });
    let mut nodes = 0u64;
    while let Some(e) = heap.pop() {
        let depth = e.prefix.len();
        if depth > 0 {
            let last = e.prefix[depth - 1];
            // the best path to (depth, last) was already expanded
            if closed[depth - 1][last] {
                continue;
            }
            closed[depth - 1][last] = true;
            nodes += 1;
        }
        if depth == n {
            return Ok(MapSolution {
                objective: probs.score(&e.prefix),
                assignment: e.prefix,
                stats: SolverStats {
                    nodes,
                    ms: start.elapsed().as_secs_f64() * 1e3,
                    optimal: true,
                },
            });
        }
        for l in 0..k {
            let ok = match e.prefix.last() {
                None => t.start[l],
                Some(&p) => t.allowed[p][l],
            };
            if !ok || closed[depth][l] {
                continue;
            }
            let g = e.g + lp[depth][l];
            let mut prefix = e.prefix.clone();
            prefix.push(l);
            heap.push(Entry { f: g + h[depth + 1], g, prefix });
        }
    }
    Err(InferError::Infeasible { nodes })
}

/// The same restrictions as a ground program over `tag(i)` variables, one
/// forbidden-pair constraint per position and disallowed transition.
pub fn sequence_program(n: usize, t: &Transitions) -> GroundProgram {
    let k = t.n_labels();
    let vars = (0..n)
        .map(|i| DecisionVar {
            name: format!("tag({i})"),
            pred: "tag".into(),
            args: vec![i as i64],
            categorical: true,
            labels: (0..k).map(|l| l.to_string()).collect(),
        })
        .collect();
    let mut constraints = Vec::new();
    let mut push = |template: &str, bindings: Vec<(String, i64)>, formula: GroundFormula| {
        let index = constraints.iter().filter(|c: &&GroundConstraint| c.template == template).count();
        constraints.push(GroundConstraint {
            template: template.into(),
            index,
            weight: None,
            bindings,
            scope: formula.vars(),
            formula,
        });
    };
    if n > 0 {
        for l in (0..k).filter(|&l| !t.start[l]) {
            push("start", vec![("l".into(), l as i64)], GroundFormula::not(GroundFormula::lit(0, l)));
        }
    }
    for i in 1..n {
        for p in 0..k {
            for l in (0..k).filter(|&l| !t.allowed[p][l]) {
                push(
                    "transition",
                    vec![("i".into(), i as i64), ("p".into(), p as i64), ("l".into(), l as i64)],
                    GroundFormula::not(GroundFormula::And(vec![
                        GroundFormula::lit(i - 1, p),
                        GroundFormula::lit(i, l),
                    ])),
                );
            }
        }
    }
    GroundProgram { vars, constraints }
}
