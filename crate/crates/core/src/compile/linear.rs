use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::lang::{CountKind, GroundFormula, GroundProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    Le,
    Eq,
    Ge,
}

impl Cmp {
    pub fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Eq => "=",
            Cmp::Ge => ">=",
        }
    }

    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        const TOL: f64 = 1e-9;
        match self {
            Cmp::Le => lhs <= rhs + TOL,
            Cmp::Eq => (lhs - rhs).abs() <= TOL,
            Cmp::Ge => lhs >= rhs - TOL,
        }
    }

    fn flipped(self) -> Cmp {
        match self {
            Cmp::Le => Cmp::Ge,
            Cmp::Eq => Cmp::Eq,
            Cmp::Ge => Cmp::Le,
        }
    }
}

/// `Σ coef·x cmp rhs` over 0-1 variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    /// Sorted by variable, no zero coefficients.
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
    pub origin: String,
}

impl Row {
    pub fn lhs(&self, x: &[u8]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * x[j] as f64).sum()
    }

    pub fn satisfied(&self, x: &[u8]) -> bool {
        self.cmp.holds(self.lhs(x), self.rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LpVarKind {
    /// Indicator of `decision variable == label`.
    Indicator { var: usize, label: usize },
    /// Auxiliary equal to the truth value of its definition.
    Aux { def: GroundFormula },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpVar {
    pub name: String,
    pub kind: LpVarKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    pub vars: Vec<LpVar>,
    pub rows: Vec<Row>,
    /// Maximized.
    pub objective: Vec<f64>,
    /// `indicators[v][l]` is the column of `v == l`.
    pub indicators: Vec<Vec<usize>>,
    pub decision_names: Vec<String>,
    pub label_names: Vec<Vec<String>>,
}

impl LinearSystem {
    pub fn n_cols(&self) -> usize {
        self.vars.len()
    }

    pub fn n_decision(&self) -> usize {
        self.indicators.len()
    }

    pub fn aux_columns(&self) -> impl Iterator<Item = usize> + '_ {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| matches!(v.kind, LpVarKind::Aux { .. }))
            .map(|(j, _)| j)
    }

    pub fn is_feasible(&self, x: &[u8]) -> bool {
        x.len() == self.vars.len() && self.rows.iter().all(|r| r.satisfied(x))
    }

    pub fn objective_value(&self, x: &[u8]) -> f64 {
        self.objective.iter().zip(x).map(|(c, &v)| c * v as f64).sum()
    }

    /// Indicator columns set from a label assignment; auxiliaries computed
    /// from their definitions.
    pub fn point_from_assignment(&self, a: &[usize]) -> Vec<u8> {
        let mut x = vec![0u8; self.vars.len()];
        for (v, &l) in a.iter().enumerate() {
            x[self.indicators[v][l]] = 1;
        }
        for (j, var) in self.vars.iter().enumerate() {
            if let LpVarKind::Aux { def } = &var.kind {
                x[j] = def.eval(a) as u8;
            }
        }
        x
    }

    /// Reads labels back from indicator columns.
    pub fn assignment_from_point(&self, x: &[u8]) -> Option<Vec<usize>> {
        self.indicators
            .iter()
            .map(|cols| cols.iter().position(|&j| x[j] == 1))
            .collect()
    }

    /// Objective = Σ score[v][l] · x_{v,l}; auxiliaries get 0.
    pub fn set_objective(&mut self, scores: &[Vec<f64>]) {
        self.objective = vec![0.0; self.vars.len()];
        for (v, cols) in self.indicators.iter().enumerate() {
            for (l, &j) in cols.iter().enumerate() {
                self.objective[j] = scores[v][l];
            }
        }
    }
}

/// Affine expression over columns.
#[derive(Debug, Clone, Default, PartialEq)]
struct Expr {
    terms: BTreeMap<usize, f64>,
    constant: f64,
}

impl Expr {
    fn col(j: usize) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(j, 1.0);
        Expr { terms, constant: 0.0 }
    }

    fn constant(c: f64) -> Self {
        Expr {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    fn as_const(&self) -> Option<f64> {
        self.terms.is_empty().then_some(self.constant)
    }

    fn add_scaled(&mut self, other: &Expr, s: f64) {
        for (&j, &c) in &other.terms {
            *self.terms.entry(j).or_insert(0.0) += s * c;
        }
        self.constant += s * other.constant;
    }

    fn sum(es: &[Expr]) -> Expr {
        let mut out = Expr::default();
        for e in es {
            out.add_scaled(e, 1.0);
        }
        out
    }

    fn complement(&self) -> Expr {
        let mut out = Expr::constant(1.0);
        out.add_scaled(self, -1.0);
        out
    }
}

/// Negation normal form with explicit counting bounds.
#[derive(Debug, Clone, PartialEq)]
enum Nnf {
    Const(bool),
    Lit { var: usize, label: usize, pos: bool },
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
    Iff(Box<Nnf>, Box<Nnf>),
    AtLeast(usize, Vec<Nnf>),
    AtMost(usize, Vec<Nnf>),
    Exactly(usize, Vec<Nnf>),
}

fn nnf(f: &GroundFormula, neg: bool) -> Nnf {
    match f {
        GroundFormula::Const(b) => Nnf::Const(*b != neg),
        GroundFormula::Lit { var, label } => Nnf::Lit {
            var: *var,
            label: *label,
            pos: !neg,
        },
        GroundFormula::Not(x) => nnf(x, !neg),
        GroundFormula::And(xs) => {
            let ys = xs.iter().map(|x| nnf(x, neg)).collect();
            if neg {
                Nnf::Or(ys)
            } else {
                Nnf::And(ys)
            }
        }
        GroundFormula::Or(xs) => {
            let ys = xs.iter().map(|x| nnf(x, neg)).collect();
            if neg {
                Nnf::And(ys)
            } else {
                Nnf::Or(ys)
            }
        }
        GroundFormula::Implies(a, b) => {
            if neg {
                Nnf::And(vec![nnf(a, false), nnf(b, true)])
            } else {
                Nnf::Or(vec![nnf(a, true), nnf(b, false)])
            }
        }
        GroundFormula::Iff(a, b) => Nnf::Iff(Box::new(nnf(a, false)), Box::new(nnf(b, neg))),
        GroundFormula::Count { kind, k, elems } => {
            let es: Vec<Nnf> = elems.iter().map(|e| nnf(e, false)).collect();
            let k = *k;
            match (kind, neg) {
                (CountKind::AtLeast, false) => Nnf::AtLeast(k, es),
                (CountKind::AtMost, false) => Nnf::AtMost(k, es),
                (CountKind::Exactly, false) => Nnf::Exactly(k, es),
                (CountKind::AtLeast, true) if k == 0 => Nnf::Const(false),
                (CountKind::AtLeast, true) => Nnf::AtMost(k - 1, es),
                (CountKind::AtMost, true) => Nnf::AtLeast(k + 1, es),
                (CountKind::Exactly, true) if k == 0 => Nnf::AtLeast(1, es),
                (CountKind::Exactly, true) => {
                    Nnf::Or(vec![Nnf::AtMost(k - 1, es.clone()), Nnf::AtLeast(k + 1, es)])
                }
            }
        }
    }
}

fn negate(n: &Nnf) -> Nnf {
    match n {
        Nnf::Const(b) => Nnf::Const(!b),
        Nnf::Lit { var, label, pos } => Nnf::Lit {
            var: *var,
            label: *label,
            pos: !pos,
        },
        Nnf::And(xs) => Nnf::Or(xs.iter().map(negate).collect()),
        Nnf::Or(xs) => Nnf::And(xs.iter().map(negate).collect()),
        Nnf::Iff(a, b) => Nnf::Iff(a.clone(), Box::new(negate(b))),
        Nnf::AtLeast(0, _) => Nnf::Const(false),
        Nnf::AtLeast(k, es) => Nnf::AtMost(k - 1, es.clone()),
        Nnf::AtMost(k, es) => Nnf::AtLeast(k + 1, es.clone()),
        Nnf::Exactly(0, es) => Nnf::AtLeast(1, es.clone()),
        Nnf::Exactly(k, es) => Nnf::Or(vec![
            Nnf::AtMost(k - 1, es.clone()),
            Nnf::AtLeast(k + 1, es.clone()),
        ]),
    }
}

fn to_ground(n: &Nnf) -> GroundFormula {
    match n {
        Nnf::Const(b) => GroundFormula::Const(*b),
        Nnf::Lit { var, label, pos } => {
            let l = GroundFormula::lit(*var, *label);
            if *pos {
                l
            } else {
                GroundFormula::not(l)
            }
        }
        Nnf::And(xs) => GroundFormula::And(xs.iter().map(to_ground).collect()),
        Nnf::Or(xs) => GroundFormula::Or(xs.iter().map(to_ground).collect()),
        Nnf::Iff(a, b) => GroundFormula::iff(to_ground(a), to_ground(b)),
        Nnf::AtLeast(k, es) | Nnf::AtMost(k, es) | Nnf::Exactly(k, es) => GroundFormula::Count {
            kind: match n {
                Nnf::AtLeast(..) => CountKind::AtLeast,
                Nnf::AtMost(..) => CountKind::AtMost,
                _ => CountKind::Exactly,
            },
            k: *k,
            elems: es.iter().map(to_ground).collect(),
        },
    }
}

fn is_literal(n: &Nnf) -> bool {
    matches!(n, Nnf::Lit { .. } | Nnf::Const(_))
}

struct Linearizer {
    vars: Vec<LpVar>,
    rows: Vec<Row>,
    indicators: Vec<Vec<usize>>,
    cache: HashMap<String, Expr>,
    n_aux: usize,
}

impl Linearizer {
    fn lit(&self, var: usize, label: usize, pos: bool) -> Expr {
        let e = Expr::col(self.indicators[var][label]);
        if pos {
            e
        } else {
            e.complement()
        }
    }

    /// Adds `e cmp 0` after moving constants right and normalizing sign.
    fn push(&mut self, e: Expr, cmp: Cmp, origin: &str) {
        let mut terms: Vec<(usize, f64)> = e.terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
        let mut rhs = -e.constant;
        let mut cmp = cmp;
        if terms.is_empty() {
            if cmp.holds(0.0, rhs) {
                return;
            }
            // keep an unsatisfiable row so the system stays infeasible
            self.rows.push(Row {
                terms,
                cmp: Cmp::Ge,
                rhs: 1.0,
                origin: origin.to_string(),
            });
            return;
        }
        if terms[0].1 < 0.0 {
            for t in &mut terms {
                t.1 = -t.1;
            }
            rhs = -rhs;
            cmp = cmp.flipped();
        }
        self.rows.push(Row {
            terms,
            cmp,
            rhs: rhs + 0.0,
            origin: origin.to_string(),
        });
    }

    fn new_aux(&mut self, def: &Nnf) -> Expr {
        let j = self.vars.len();
        let k = self.n_aux;
        self.n_aux += 1;
        self.vars.push(LpVar {
            name: format!("y{k}"),
            kind: LpVarKind::Aux { def: to_ground(def) },
        });
        Expr::col(j)
    }

    /// Expression in {0,1} equal to the truth value of `n`.
    fn expr(&mut self, n: &Nnf) -> Expr {
        match n {
            Nnf::Const(b) => return Expr::constant(*b as u8 as f64),
            Nnf::Lit { var, label, pos } => return self.lit(*var, *label, *pos),
            _ => {}
        }
        let key = format!("{n:?}");
        if let Some(e) = self.cache.get(&key) {
            return e.clone();
        }
        let e = self.reify(n);
        self.cache.insert(key, e.clone());
        e
    }

    fn reify(&mut self, n: &Nnf) -> Expr {
        match n {
            Nnf::And(xs) | Nnf::Or(xs) => {
                let is_and = matches!(n, Nnf::And(_));
                let mut es = Vec::new();
                for x in xs {
                    let e = self.expr(x);
                    match e.as_const() {
                        Some(c) if (c == 0.0) == is_and => return Expr::constant(c),
                        Some(_) => {}
                        None => es.push(e),
                    }
                }
                match es.len() {
                    0 => return Expr::constant(if is_and { 1.0 } else { 0.0 }),
                    1 => return es.pop().unwrap(),
                    _ => {}
                }
                let y = self.new_aux(n);
                let origin = format!("def {}", self.vars.last().unwrap().name);
                let total = Expr::sum(&es);
                let m = es.len() as f64;
                if is_and {
                    // y <= e_i ; y >= Σe - (m-1)
                    for e in &es {
                        let mut r = y.clone();
                        r.add_scaled(e, -1.0);
                        self.push(r, Cmp::Le, &origin);
                    }
                    let mut r = y.clone();
                    r.add_scaled(&total, -1.0);
                    r.constant += m - 1.0;
                    self.push(r, Cmp::Ge, &origin);
                } else {
                    // y >= e_i ; y <= Σe
                    for e in &es {
                        let mut r = y.clone();
                        r.add_scaled(e, -1.0);
                        self.push(r, Cmp::Ge, &origin);
                    }
                    let mut r = y.clone();
                    r.add_scaled(&total, -1.0);
                    self.push(r, Cmp::Le, &origin);
                }
                y
            }
            Nnf::Iff(a, b) => {
                let ea = self.expr(a);
                let eb = self.expr(b);
                match (ea.as_const(), eb.as_const()) {
                    (Some(x), Some(z)) => return Expr::constant((x == z) as u8 as f64),
                    (Some(x), None) => return if x == 1.0 { eb } else { eb.complement() },
                    (None, Some(z)) => return if z == 1.0 { ea } else { ea.complement() },
                    _ => {}
                }
                let y = self.new_aux(n);
                let origin = format!("def {}", self.vars.last().unwrap().name);
                // y >= 1 - a - b
                let mut r = y.clone();
                r.add_scaled(&ea, 1.0);
                r.add_scaled(&eb, 1.0);
                r.constant -= 1.0;
                self.push(r, Cmp::Ge, &origin);
                // y >= a + b - 1
                let mut r = y.clone();
                r.add_scaled(&ea, -1.0);
                r.add_scaled(&eb, -1.0);
                r.constant += 1.0;
                self.push(r, Cmp::Ge, &origin);
                // y <= 1 - a + b
                let mut r = y.clone();
                r.add_scaled(&ea, 1.0);
                r.add_scaled(&eb, -1.0);
                r.constant -= 1.0;
                self.push(r, Cmp::Le, &origin);
                // y <= 1 + a - b
                let mut r = y.clone();
                r.add_scaled(&ea, -1.0);
                r.add_scaled(&eb, 1.0);
                r.constant -= 1.0;
                self.push(r, Cmp::Le, &origin);
                y
            }
            Nnf::AtLeast(k, es) => {
                let k = *k;
                let n_el = es.len();
                if k == 0 {
                    return Expr::constant(1.0);
                }
                if k > n_el {
                    return Expr::constant(0.0);
                }
                let exprs: Vec<Expr> = es.iter().map(|e| self.expr(e)).collect();
                let s = Expr::sum(&exprs);
                if let Some(c) = s.as_const() {
                    return Expr::constant((c >= k as f64) as u8 as f64);
                }
                let y = self.new_aux(n);
                let origin = format!("def {}", self.vars.last().unwrap().name);
                // s >= k·y
                let mut r = s.clone();
                r.add_scaled(&y, -(k as f64));
                self.push(r, Cmp::Ge, &origin);
                // s <= (k-1) + (n-k+1)·y
                let mut r = s;
                r.add_scaled(&y, -((n_el - k + 1) as f64));
                r.constant -= (k - 1) as f64;
                self.push(r, Cmp::Le, &origin);
                y
            }
            Nnf::AtMost(k, es) => self.expr(&Nnf::AtLeast(k + 1, es.clone())).complement(),
            Nnf::Exactly(k, es) => self.expr(&Nnf::And(vec![
                Nnf::AtLeast(*k, es.clone()),
                Nnf::AtMost(*k, es.clone()),
            ])),
            Nnf::Const(_) | Nnf::Lit { .. } => unreachable!("handled in expr"),
        }
    }

    fn assert(&mut self, n: &Nnf, origin: &str) {
        match n {
            Nnf::Const(true) => {}
            Nnf::Const(false) => self.push(Expr::constant(-1.0), Cmp::Ge, origin),
            Nnf::Lit { var, label, pos } => {
                let mut e = Expr::col(self.indicators[*var][*label]);
                e.constant = -(*pos as u8 as f64);
                self.push(e, Cmp::Eq, origin);
            }
            Nnf::And(xs) => {
                for x in xs {
                    self.assert(x, origin);
                }
            }
            Nnf::Or(xs) => {
                // literal ∨ ... ∨ (conjunction of literals): distribute
                let conj: Vec<usize> = xs
                    .iter()
                    .enumerate()
                    .filter(|(_, x)| !is_literal(x))
                    .map(|(i, _)| i)
                    .collect();
                if conj.len() == 1 {
                    if let Nnf::And(parts) = &xs[conj[0]] {
                        if parts.iter().all(is_literal) {
                            for p in parts {
                                let mut clause: Vec<Nnf> = xs
                                    .iter()
                                    .enumerate()
                                    .filter(|(i, _)| *i != conj[0])
                                    .map(|(_, x)| x.clone())
                                    .collect();
                                clause.push(p.clone());
                                self.assert(&Nnf::Or(clause), origin);
                            }
                            return;
                        }
                    }
                }
                let es: Vec<Expr> = xs.iter().map(|x| self.expr(x)).collect();
                let mut s = Expr::sum(&es);
                s.constant -= 1.0;
                self.push(s, Cmp::Ge, origin);
            }
            Nnf::Iff(a, b) => {
                self.assert(&Nnf::Or(vec![negate(a), (**b).clone()]), origin);
                self.assert(&Nnf::Or(vec![(**a).clone(), negate(b)]), origin);
            }
            Nnf::AtLeast(k, es) | Nnf::AtMost(k, es) | Nnf::Exactly(k, es) => {
                let exprs: Vec<Expr> = es.iter().map(|e| self.expr(e)).collect();
                let mut s = Expr::sum(&exprs);
                s.constant -= *k as f64;
                let cmp = match n {
                    Nnf::AtLeast(..) => Cmp::Ge,
                    Nnf::AtMost(..) => Cmp::Le,
                    _ => Cmp::Eq,
                };
                self.push(s, cmp, origin);
            }
        }
    }
}

/// Lowers a ground program to a 0-1 system whose feasible points project
/// exactly onto the satisfying assignments.
pub fn linearize(g: &GroundProgram) -> LinearSystem {
    let mut lin = Linearizer {
        vars: Vec::new(),
        rows: Vec::new(),
        indicators: Vec::new(),
        cache: HashMap::new(),
        n_aux: 0,
    };
    for (v, dv) in g.vars.iter().enumerate() {
        let mut cols = Vec::new();
        for l in 0..dv.n_labels() {
            cols.push(lin.vars.len());
            lin.vars.push(LpVar {
                name: format!("x{v}_{l}"),
                kind: LpVarKind::Indicator { var: v, label: l },
            });
        }
        lin.indicators.push(cols);
    }
    for (v, dv) in g.vars.iter().enumerate() {
        let mut e = Expr::default();
        for &j in &lin.indicators[v] {
            e.terms.insert(j, 1.0);
        }
        e.constant = -1.0;
        lin.push(e, Cmp::Eq, &format!("one {}", dv.name));
    }
    for c in &g.constraints {
        let n = nnf(&c.formula, false);
        lin.assert(&n, &c.id());
    }
    let n_cols = lin.vars.len();
    LinearSystem {
        vars: lin.vars,
        rows: lin.rows,
        objective: vec![0.0; n_cols],
        indicators: lin.indicators,
        decision_names: g.vars.iter().map(|v| v.name.clone()).collect(),
        label_names: g.vars.iter().map(|v| v.labels.clone()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{DecisionVar, GroundConstraint};

    fn bool_program(n: usize, formulas: Vec<GroundFormula>) -> GroundProgram {
        GroundProgram {
            vars: (0..n)
                .map(|i| DecisionVar {
                    name: format!("b{i}"),
                    pred: "b".into(),
                    args: vec![i as i64],
                    categorical: false,
                    labels: vec!["false".into(), "true".into()],
                })
                .collect(),
            constraints: formulas
                .into_iter()
                .enumerate()
                .map(|(i, f)| GroundConstraint {
                    template: "t".into(),
                    index: i,
                    weight: None,
                    bindings: vec![],
                    scope: f.vars(),
                    formula: f,
                })
                .collect(),
        }
    }

    fn t(v: usize) -> GroundFormula {
        GroundFormula::lit(v, 1)
    }

    #[test]
    fn implication_row() {
        let ls = linearize(&bool_program(2, vec![GroundFormula::implies(t(0), t(1))]));
        let r = ls.rows.last().unwrap();
        let (a, b) = (ls.indicators[0][1], ls.indicators[1][1]);
        assert_eq!(r.terms, vec![(a, 1.0), (b, -1.0)]);
        assert_eq!((r.cmp, r.rhs), (Cmp::Le, 0.0));
        assert_eq!(ls.aux_columns().count(), 0);
    }

    #[test]
    fn clause_with_negation() {
        let ls = linearize(&bool_program(
            2,
            vec![GroundFormula::Or(vec![t(0), GroundFormula::not(t(1))])],
        ));
        let r = ls.rows.last().unwrap();
        let (a, b) = (ls.indicators[0][1], ls.indicators[1][1]);
        assert_eq!(r.terms, vec![(a, 1.0), (b, -1.0)]);
        assert_eq!((r.cmp, r.rhs), (Cmp::Ge, 0.0));
    }

    #[test]
    fn exactly_one_row() {
        let ls = linearize(&bool_program(
            10,
            vec![GroundFormula::Count {
                kind: CountKind::Exactly,
                k: 1,
                elems: (0..10).map(t).collect(),
            }],
        ));
        let r = ls.rows.last().unwrap();
        assert_eq!(r.terms.len(), 10);
        assert!(r.terms.iter().all(|&(_, c)| c == 1.0));
        assert_eq!((r.cmp, r.rhs), (Cmp::Eq, 1.0));
    }

    #[test]
    fn every_variable_has_exactly_one_row() {
        let ls = linearize(&bool_program(3, vec![]));
        assert_eq!(ls.rows.len(), 3);
        for (v, r) in ls.rows.iter().enumerate() {
            assert_eq!(r.cmp, Cmp::Eq);
            assert_eq!(r.rhs, 1.0);
            assert_eq!(r.terms.iter().map(|t| t.0).collect::<Vec<_>>(), ls.indicators[v]);
        }
    }

    #[test]
    fn unsatisfiable_constant_is_infeasible() {
        let ls = linearize(&bool_program(1, vec![GroundFormula::Const(false)]));
        let x = ls.point_from_assignment(&[0]);
        assert!(!ls.is_feasible(&x));
    }

    #[test]
    fn implication_into_conjunction_is_distributed() {
        let f = GroundFormula::implies(t(0), GroundFormula::And(vec![t(1), t(2)]));
        let ls = linearize(&bool_program(3, vec![f]));
        assert_eq!(ls.aux_columns().count(), 0);
        assert_eq!(ls.rows.len(), 5);
    }
}
