//! Depth-first branch-and-bound over a 0-1 linear system with bound
//! propagation on every row.

use std::time::{Duration, Instant};

use super::{InferError, MapSolution, PredictionTable, SolverStats};
use crate::compile::{Cmp, LinearSystem};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone)]
pub struct IlpOptions {
    pub timeout: Duration,
}

impl Default for IlpOptions {
    fn default() -> Self {
        IlpOptions {
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

const FREE: i8 = -1;
const TOL: f64 = 1e-9;

/// `Σ a·x ≤ b`.
struct LeRow {
    terms: Vec<(usize, f64)>,
    b: f64,
}

struct Search<'a> {
    rows: Vec<LeRow>,
    col_rows: Vec<Vec<usize>>,
    val: Vec<i8>,
    trail: Vec<usize>,
    indicators: &'a [Vec<usize>],
    lp: &'a [Vec<f64>],
    table: &'a PredictionTable,
    best: Option<(Vec<usize>, f64)>,
    nodes: u64,
    start: Instant,
    timeout: Duration,
    timed_out: bool,
    queue: Vec<usize>,
    queued: Vec<bool>,
}

impl<'a> Search<'a> {
    fn fix(&mut self, j: usize, v: i8) {
        self.val[j] = v;
        self.trail.push(j);
        for &r in &self.col_rows[j] {
            if !self.queued[r] {
                self.queued[r] = true;
                self.queue.push(r);
            }
        }
    }

    fn undo(&mut self, mark: usize) {
        while self.trail.len() > mark {
            let j = self.trail.pop().unwrap();
            self.val[j] = FREE;
        }
    }

    /// Runs queued rows to a fixpoint; false on a violated row.
    fn propagate(&mut self) -> bool {
        while let Some(r) = self.queue.pop() {
            self.queued[r] = false;
            let row = &self.rows[r];
            let mut minact = 0.0;
            for &(j, a) in &row.terms {
                match self.val[j] {
                    FREE => {
                        if a < 0.0 {
                            minact += a;
                        }
                    }
                    v => minact += a * v as f64,
                }
            }
            if minact > row.b + TOL {
                self.clear_queue();
                return false;
            }
            let mut forced = Vec::new();
            for &(j, a) in &row.terms {
                if self.val[j] != FREE {
                    continue;
                }
                if a > 0.0 && minact + a > row.b + TOL {
                    forced.push((j, 0));
                } else if a < 0.0 && minact - a > row.b + TOL {
                    forced.push((j, 1));
                }
            }
            for (j, v) in forced {
                self.fix(j, v);
            }
        }
        true
    }

    fn clear_queue(&mut self) {
        for r in self.queue.drain(..) {
            self.queued[r] = false;
        }
    }

    fn chosen(&self, v: usize) -> Option<usize> {
        self.indicators[v].iter().position(|&j| self.val[j] == 1)
    }

    fn available(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.indicators[v]
            .iter()
            .enumerate()
            .filter(|(_, &j)| self.val[j] != 0)
            .map(|(l, _)| l)
    }

    fn dfs(&mut self) {
        self.nodes += 1;
        if self.nodes % 512 == 0 && self.start.elapsed() > self.timeout {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        let mut bound = 0.0;
        // (gap, var) of the undecided variable to branch on
        let mut branch: Option<(f64, usize)> = None;
        for v in 0..self.indicators.len() {
            if let Some(l) = self.chosen(v) {
                bound += self.lp[v][l];
                continue;
            }
            let (mut b1, mut b2) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
            for l in self.available(v) {
                let x = self.lp[v][l];
                if x > b1 {
                    b2 = b1;
                    b1 = x;
                } else if x > b2 {
                    b2 = x;
                }
            }
            if b1 == f64::NEG_INFINITY {
                return;
            }
            bound += b1;
            let gap = b1 - b2;
            if branch.is_none_or(|(g, _)| gap > g) {
                branch = Some((gap, v));
            }
        }
        if let Some((_, best)) = &self.best {
            if bound <= *best {
                return;
            }
        }
        match branch {
            Some((_, v)) => {
                let mut labels: Vec<usize> = self.available(v).collect();
                labels.sort_by(|&a, &b| self.lp[v][b].total_cmp(&self.lp[v][a]).then(a.cmp(&b)));
                for l in labels {
                    let mark = self.trail.len();
                    self.fix(self.indicators[v][l], 1);
                    if self.propagate() {
                        self.dfs();
                    }
                    self.undo(mark);
                    if self.timed_out {
                        return;
                    }
                }
            }
            None => {
                if let Some(j) = self.val.iter().position(|&x| x == FREE) {
                    // auxiliaries not settled by propagation
                    for v in [0, 1] {
                        let mark = self.trail.len();
                        self.fix(j, v);
                        if self.propagate() {
                            self.dfs();
                        }
                        self.undo(mark);
                    }
                    return;
                }
                let a: Vec<usize> = (0..self.indicators.len()).map(|v| self.chosen(v).unwrap()).collect();
                let obj = self.table.score(&a);
                if self.best.as_ref().is_none_or(|(_, b)| obj > *b) {
                    self.best = Some((a, obj));
                }
            }
        }
    }
}

pub fn ilp_map(probs: &PredictionTable, ls: &LinearSystem) -> Result<MapSolution, InferError> {
    ilp_map_with(probs, ls, &IlpOptions::default())
}

/// Maximizes Σ log p over the feasible points of `ls`. On timeout the best
/// incumbent is returned with `optimal = false`.
pub fn ilp_map_with(probs: &PredictionTable, ls: &LinearSystem, opts: &IlpOptions) -> Result<MapSolution, InferError> {
    if ls.indicators.len() != probs.len()
        || ls.indicators.iter().enumerate().any(|(v, c)| c.len() != probs.n_labels(v))
    {
        return Err(InferError::Mismatch(format!(
            "linear system has {} decision variables, probabilities cover {}",
            ls.indicators.len(),
            probs.len()
        )));
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    for r in &ls.rows {
        let neg = || r.terms.iter().map(|&(j, a)| (j, -a)).collect::<Vec<_>>();
        match r.cmp {
            Cmp::Le => rows.push(LeRow {
                terms: r.terms.clone(),
                b: r.rhs,
            }),
            Cmp::Ge => rows.push(LeRow { terms: neg(), b: -r.rhs }),
            Cmp::Eq => {
                rows.push(LeRow {
                    terms: r.terms.clone(),
                    b: r.rhs,
                });
                rows.push(LeRow { terms: neg(), b: -r.rhs });
            }
        }
    }
    let mut col_rows = vec![Vec::new(); ls.n_cols()];
    for (i, r) in rows.iter().enumerate() {
        for &(j, _) in &r.terms {
            col_rows[j].push(i);
        }
    }
    let n_rows = rows.len();
    let mut s = Search {
        rows,
        col_rows,
        val: vec![FREE; ls.n_cols()],
        trail: Vec::new(),
        indicators: &ls.indicators,
        lp: probs.log_probs(),
        table: probs,
        best: None,
        nodes: 0,
        start,
        timeout: opts.timeout,
        timed_out: false,
        queue: (0..n_rows).rev().collect(),
        queued: vec![true; n_rows],
    };
    if s.propagate() {
        s.dfs();
    }
    let ms = start.elapsed().as_secs_f64() * 1e3;
    match s.best {
        Some((assignment, objective)) => Ok(MapSolution {
            assignment,
            objective,
            stats: SolverStats {
                nodes: s.nodes,
                ms,
                optimal: !s.timed_out,
            },
        }),
        None if s.timed_out => Err(InferError::Timeout { ms: ms as u64 }),
        None => Err(InferError::Infeasible { nodes: s.nodes }),
    }
}
