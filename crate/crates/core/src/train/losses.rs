//! Sampling and exact semantic losses over a probability table, each with
//! its gradient with respect to the probabilities.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::lang::{GroundFormula, GroundProgram};

/// Floor inside logs of satisfying mass and sample ratios.
pub const EPS_FLOOR: f64 = 1e-8;
/// Default bound on enumerated assignments for the exact loss.
pub const DEFAULT_SEMANTIC_CAP: u128 = 1_000_000;

/// Value of a loss and its gradient with respect to each probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Vec<Vec<f64>>,
    /// Number of terms summed into `value`.
    pub terms: usize,
    /// Terms whose ratio or mass hit the floor.
    pub floored: usize,
}

impl LossGrad {
    fn zero(probs: &[Vec<f64>]) -> LossGrad {
        LossGrad {
            value: 0.0,
            grad: probs.iter().map(|r| vec![0.0; r.len()]).collect(),
            terms: 0,
            floored: 0,
        }
    }
}

/// What a single term of the sampling loss asserts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// One term per ground constraint, weighted over its scope.
    #[default]
    PerConstraint,
    /// One term per connected component of the constraint graph, asserting
    /// all of its constraints.
    Component,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// `n` assignments drawn with replacement.
    Draw(usize),
    /// Every assignment of each term's scope once.
    Exhaustive,
}

/// A term: variables it weights over and the formulas it asserts.
struct Term<'g> {
    scope: Vec<usize>,
    formulas: Vec<&'g GroundFormula>,
}

/// Variable sets joined by shared constraints. Constraints without
/// variables come back separately.
pub(crate) fn components(g: &GroundProgram) -> (Vec<(Vec<usize>, Vec<usize>)>, Vec<usize>) {
    let n = g.vars.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let next = p[y];
            p[y] = r;
            y = next;
        }
        r
    }
    let mut constant = Vec::new();
    for (ci, c) in g.constraints.iter().enumerate() {
        match c.scope.split_first() {
            None => constant.push(ci),
            Some((&a, rest)) => {
                for &b in rest {
                    let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                }
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for (ci, c) in g.constraints.iter().enumerate() {
        if let Some(&a) = c.scope.first() {
            let r = find(&mut parent, a);
            by_root.entry(r).or_default().1.push(ci);
        }
    }
    for v in 0..n {
        let r = find(&mut parent, v);
        if let Some(e) = by_root.get_mut(&r) {
            e.0.push(v);
        }
    }
    (by_root.into_values().collect(), constant)
}

fn terms(g: &GroundProgram, grouping: Grouping) -> (Vec<Term<'_>>, usize) {
    let mut out = Vec::new();
    let mut const_false = 0;
    match grouping {
        Grouping::PerConstraint => {
            for c in &g.constraints {
                if c.scope.is_empty() {
                    const_false += !c.formula.eval(&[]) as usize;
                } else {
                    out.push(Term {
                        scope: c.scope.clone(),
                        formulas: vec![&c.formula],
                    });
                }
            }
        }
        Grouping::Component => {
            let (comps, constant) = components(g);
            const_false = constant.iter().filter(|&&ci| !g.constraints[ci].formula.eval(&[])).count();
            for (vars, cons) in comps {
                out.push(Term {
                    scope: vars,
                    formulas: cons.iter().map(|&ci| &g.constraints[ci].formula).collect(),
                });
            }
        }
    }
    (out, const_false)
}

fn ln(p: f64) -> f64 {
    p.max(1e-300).ln()
}

fn draw<R: Rng>(rng: &mut R, row: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (l, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return l;
        }
    }
    row.len() - 1
}

/// Calls `f` with every assignment of `scope` (as a full-length vector, other
/// entries 0), first scope variable most significant.
fn for_each_assignment(n_labels: &[usize], scope: &[usize], n_vars: usize, mut f: impl FnMut(&[usize])) {
    let mut a = vec![0usize; n_vars];
    loop {
        f(&a);
        let mut i = scope.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            let v = scope[i];
            a[v] += 1;
            if a[v] < n_labels[v] {
                break;
            }
            a[v] = 0;
        }
    }
}

/// `Σ_α −log(ratio_α)` where `ratio_α` is the probability-weighted share of
/// samples satisfying term α, floored at [`EPS_FLOOR`].
pub fn sampling_loss<R: Rng>(
    probs: &[Vec<f64>],
    g: &GroundProgram,
    sampling: Sampling,
    grouping: Grouping,
    rng: &mut R,
) -> Result<LossGrad, TrainError> {
    if let Sampling::Draw(0) = sampling {
        return Err(TrainError::Config("sample count must be at least 1".into()));
    }
    let n_labels: Vec<usize> = probs.iter().map(Vec::len).collect();
    let (terms, const_false) = terms(g, grouping);
    let mut out = LossGrad::zero(probs);
    out.terms = terms.len() + const_false;
    out.floored = const_false;
    out.value = const_false as f64 * -EPS_FLOOR.ln();
    let samples: Vec<Vec<usize>> = match sampling {
        Sampling::Draw(n) => (0..n).map(|_| probs.iter().map(|row| draw(rng, row)).collect()).collect(),
        Sampling::Exhaustive => Vec::new(),
    };
    for t in &terms {
        // (log weight, satisfied, assignment) per sample
        let mut rows: Vec<(f64, bool, Vec<usize>)> = Vec::new();
        let mut add = |a: &[usize]| {
            let lw: f64 = t.scope.iter().map(|&v| ln(probs[v][a[v]])).sum();
            let sat = t.formulas.iter().all(|f| f.eval(a));
            rows.push((lw, sat, t.scope.iter().map(|&v| a[v]).collect()));
        };
        match sampling {
            Sampling::Draw(_) => samples.iter().for_each(|s| add(s)),
            Sampling::Exhaustive => {
                let space: u128 = t.scope.iter().map(|&v| n_labels[v] as u128).product();
                if space > DEFAULT_SEMANTIC_CAP {
                    return Err(TrainError::SpaceTooLarge {
                        size: space,
                        cap: DEFAULT_SEMANTIC_CAP,
                    });
                }
                for_each_assignment(&n_labels, &t.scope, probs.len(), &mut add);
            }
        }
        let m = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = rows.iter().map(|r| (r.0 - m).exp()).collect();
        let total: f64 = w.iter().sum();
        let sat_w: f64 = rows.iter().zip(&w).map(|(r, w)| if r.1 { *w } else { 0.0 }).sum();
        let q: Vec<f64> = w.iter().map(|w| w / total).collect();
        let ratio = sat_w / total;
        if ratio < EPS_FLOOR {
            out.value -= EPS_FLOOR.ln();
            out.floored += 1;
            log::debug!("sampling loss: no satisfying mass for a term, floored");
            continue;
        }
        out.value -= ratio.ln();
        // d(−log ratio)/d log w_s = −q_s (1[s ⊨ α] − ratio) / ratio
        for ((_, sat, vals), &qs) in rows.iter().zip(&q) {
            let d = -qs * ((*sat as u8 as f64) - ratio) / ratio;
            if d == 0.0 {
                continue;
            }
            for (&v, &l) in t.scope.iter().zip(vals) {
                out.grad[v][l] += d / probs[v][l].max(1e-300);
            }
        }
    }
    Ok(out)
}

/// Assignments the exact semantic loss enumerates: the sum over connected
/// components of their joint label space.
pub fn semantic_space(g: &GroundProgram) -> u128 {
    component_space(g, &components(g).0)
}

fn component_space(g: &GroundProgram, comps: &[(Vec<usize>, Vec<usize>)]) -> u128 {
    comps
        .iter()
        .map(|(vars, _)| {
            vars.iter()
                .fold(1u128, |acc, &v| acc.saturating_mul(g.vars[v].n_labels() as u128))
        })
        .fold(0u128, u128::saturating_add)
}

/// `−Σ_c log Σ_{a ⊨ c} Π_v p(v, a(v))` over connected components `c`, by
/// depth-first enumeration that checks each constraint once its last
/// variable is assigned.
pub fn semantic_loss_exact(probs: &[Vec<f64>], g: &GroundProgram, cap: u128) -> Result<LossGrad, TrainError> {
    let (comps, constant) = components(g);
    let space = component_space(g, &comps);
    if space > cap {
        return Err(TrainError::SpaceTooLarge { size: space, cap });
    }
    let mut out = LossGrad::zero(probs);
    out.terms = comps.len() + constant.len();
    for &ci in &constant {
        if !g.constraints[ci].formula.eval(&[]) {
            out.value -= EPS_FLOOR.ln();
            out.floored += 1;
        }
    }
    for (vars, cons) in &comps {
        // constraints checked after assigning position i of `vars`
        let pos: std::collections::HashMap<usize, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut check_at: Vec<Vec<&GroundFormula>> = vec![Vec::new(); vars.len()];
        for &ci in cons {
            let c = &g.constraints[ci];
            let last = c.scope.iter().map(|v| pos[v]).max().unwrap();
            check_at[last].push(&c.formula);
        }
        let mut partial: Vec<Option<usize>> = vec![None; probs.len()];
        let mut z = 0.0;
        let mut mass = vec![Vec::new(); vars.len()];
        for (i, &v) in vars.iter().enumerate() {
            mass[i] = vec![0.0; probs[v].len()];
        }
        let mut chosen = vec![0usize; vars.len()];
        enumerate(probs, vars, &check_at, 0, &mut partial, &mut chosen, &mut z, &mut mass);
        if z < EPS_FLOOR {
            out.value -= EPS_FLOOR.ln();
            out.floored += 1;
            continue;
        }
        out.value -= z.ln();
        for (i, &v) in vars.iter().enumerate() {
            for (l, m) in mass[i].iter().enumerate() {
                out.grad[v][l] -= m / z;
            }
        }
    }
    Ok(out)
}

/// Accumulates the satisfying mass `z` and, per position and label, the
/// mass of satisfying assignments with that label divided by its own
/// probability (the partial derivative of `z`).
#[allow(clippy::too_many_arguments)]
fn enumerate(
    probs: &[Vec<f64>],
    vars: &[usize],
    check_at: &[Vec<&GroundFormula>],
    i: usize,
    partial: &mut Vec<Option<usize>>,
    chosen: &mut Vec<usize>,
    z: &mut f64,
    mass: &mut Vec<Vec<f64>>,
) {
    if i == vars.len() {
        let n = vars.len();
        let mut prefix = vec![1.0; n + 1];
        for k in 0..n {
            prefix[k + 1] = prefix[k] * probs[vars[k]][chosen[k]];
        }
        let mut suffix = 1.0;
        for k in (0..n).rev() {
            mass[k][chosen[k]] += prefix[k] * suffix;
            suffix *= probs[vars[k]][chosen[k]];
        }
        *z += prefix[n];
        return;
    }
    let v = vars[i];
    for l in 0..probs[v].len() {
        partial[v] = Some(l);
        chosen[i] = l;
        if check_at[i].iter().all(|f| f.eval_partial(partial) == Some(true)) {
            enumerate(probs, vars, check_at, i + 1, partial, chosen, z, mass);
        }
    }
    partial[v] = None;
}
