//! Grounding: expansion of quantified constraints over finite domains into
//! propositional constraints on categorical decision variables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::LangError;

pub const DEFAULT_GROUND_CAP: usize = 1_000_000;

/// Value bound to a free variable: an integer (range value or symbol
/// index) or a symbol name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BindingValue {
    Int(i64),
    Sym(String),
}

impl From<i64> for BindingValue {
    fn from(v: i64) -> Self {
        BindingValue::Int(v)
    }
}

impl From<&str> for BindingValue {
    fn from(v: &str) -> Self {
        BindingValue::Sym(v.to_string())
    }
}

/// A decision variable requested up front, identified by predicate name and
/// key arguments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarKey {
    pub pred: String,
    pub args: Vec<i64>,
}

/// Everything grounding needs beyond the program text.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// Sizes of open domains.
    #[serde(default)]
    pub domain_sizes: BTreeMap<String, usize>,
    /// Rows of free-variable bindings keyed by constraint name; `*` applies
    /// to constraints without their own entry.
    #[serde(default)]
    pub bindings: BTreeMap<String, Vec<BTreeMap<String, BindingValue>>>,
    /// Variables that must exist (in this order) even if no constraint
    /// mentions them.
    #[serde(default)]
    pub variables: Vec<VarKey>,
}

impl Instance {
    pub fn with_domain(mut self, name: &str, size: usize) -> Self {
        self.domain_sizes.insert(name.to_string(), size);
        self
    }

    pub fn add_row<I, K>(&mut self, constraint: &str, row: I)
    where
        I: IntoIterator<Item = (K, BindingValue)>,
        K: Into<String>,
    {
        self.bindings
            .entry(constraint.to_string())
            .or_default()
            .push(row.into_iter().map(|(k, v)| (k.into(), v)).collect());
    }

    pub fn declare(&mut self, pred: &str, args: Vec<i64>) {
        self.variables.push(VarKey {
            pred: pred.to_string(),
            args,
        });
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVar {
    pub name: String,
    pub pred: String,
    pub args: Vec<i64>,
    pub categorical: bool,
    pub labels: Vec<String>,
}

impl DecisionVar {
    pub fn n_labels(&self) -> usize {
        self.labels.len()
    }
}

/// Quantifier-free formula over literals `var == label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroundFormula {
    Const(bool),
    Lit { var: usize, label: usize },
    Not(Box<GroundFormula>),
    And(Vec<GroundFormula>),
    Or(Vec<GroundFormula>),
    Implies(Box<GroundFormula>, Box<GroundFormula>),
    Iff(Box<GroundFormula>, Box<GroundFormula>),
    Count {
        kind: CountKind,
        k: usize,
        elems: Vec<GroundFormula>,
    },
}

impl GroundFormula {
    pub fn lit(var: usize, label: usize) -> Self {
        GroundFormula::Lit { var, label }
    }

    pub fn not(f: GroundFormula) -> Self {
        GroundFormula::Not(Box::new(f))
    }

    pub fn implies(a: GroundFormula, b: GroundFormula) -> Self {
        GroundFormula::Implies(Box::new(a), Box::new(b))
    }

    pub fn iff(a: GroundFormula, b: GroundFormula) -> Self {
        GroundFormula::Iff(Box::new(a), Box::new(b))
    }

    /// Classical truth under a complete assignment of labels.
    pub fn eval(&self, a: &[usize]) -> bool {
        match self {
            GroundFormula::Const(b) => *b,
            GroundFormula::Lit { var, label } => a[*var] == *label,
            GroundFormula::Not(x) => !x.eval(a),
            GroundFormula::And(xs) => xs.iter().all(|x| x.eval(a)),
            GroundFormula::Or(xs) => xs.iter().any(|x| x.eval(a)),
            GroundFormula::Implies(x, y) => !x.eval(a) || y.eval(a),
            GroundFormula::Iff(x, y) => x.eval(a) == y.eval(a),
            GroundFormula::Count { kind, k, elems } => {
                kind.holds(elems.iter().filter(|e| e.eval(a)).count(), *k)
            }
        }
    }

    /// Three-valued evaluation under a partial assignment (`None` = unset).
    pub fn eval_partial(&self, a: &[Option<usize>]) -> Option<bool> {
        match self {
            GroundFormula::Const(b) => Some(*b),
            GroundFormula::Lit { var, label } => a[*var].map(|l| l == *label),
            GroundFormula::Not(x) => x.eval_partial(a).map(|b| !b),
            GroundFormula::And(xs) => {
                let mut unknown = false;
                for x in xs {
                    match x.eval_partial(a) {
                        Some(false) => return Some(false),
                        None => unknown = true,
                        _ => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(true)
                }
            }
            GroundFormula::Or(xs) => {
                let mut unknown = false;
                for x in xs {
                    match x.eval_partial(a) {
                        Some(true) => return Some(true),
                        None => unknown = true,
                        _ => {}
                    }
                }
                if unknown {
                    None
                } else {
                    Some(false)
                }
            }
            GroundFormula::Implies(x, y) => match (x.eval_partial(a), y.eval_partial(a)) {
                (Some(false), _) | (_, Some(true)) => Some(true),
                (Some(true), Some(false)) => Some(false),
                _ => None,
            },
            GroundFormula::Iff(x, y) => match (x.eval_partial(a), y.eval_partial(a)) {
                (Some(p), Some(q)) => Some(p == q),
                _ => None,
            },
            GroundFormula::Count { kind, k, elems } => {
                let (mut t, mut u) = (0usize, 0usize);
                for e in elems {
                    match e.eval_partial(a) {
                        Some(true) => t += 1,
                        None => u += 1,
                        _ => {}
                    }
                }
                let k = *k;
                match kind {
                    CountKind::AtLeast if t >= k => Some(true),
                    CountKind::AtLeast if t + u < k => Some(false),
                    CountKind::AtMost if t > k => Some(false),
                    CountKind::AtMost if t + u <= k => Some(true),
                    CountKind::Exactly if t > k || t + u < k => Some(false),
                    CountKind::Exactly if u == 0 => Some(t == k),
                    _ => None,
                }
            }
        }
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<usize>) {
        match self {
            GroundFormula::Const(_) => {}
            GroundFormula::Lit { var, .. } => {
                out.insert(*var);
            }
            GroundFormula::Not(x) => x.collect_vars(out),
            GroundFormula::And(xs) | GroundFormula::Or(xs) => {
                xs.iter().for_each(|x| x.collect_vars(out))
            }
            GroundFormula::Implies(x, y) | GroundFormula::Iff(x, y) => {
                x.collect_vars(out);
                y.collect_vars(out);
            }
            GroundFormula::Count { elems, .. } => elems.iter().for_each(|x| x.collect_vars(out)),
        }
    }

    pub fn vars(&self) -> Vec<usize> {
        let mut s = BTreeSet::new();
        self.collect_vars(&mut s);
        s.into_iter().collect()
    }

    /// Number of literal occurrences.
    pub fn n_atoms(&self) -> usize {
        match self {
            GroundFormula::Const(_) => 0,
            GroundFormula::Lit { .. } => 1,
            GroundFormula::Not(x) => x.n_atoms(),
            GroundFormula::And(xs) | GroundFormula::Or(xs) => xs.iter().map(|x| x.n_atoms()).sum(),
            GroundFormula::Implies(x, y) | GroundFormula::Iff(x, y) => x.n_atoms() + y.n_atoms(),
            GroundFormula::Count { elems, .. } => elems.iter().map(|x| x.n_atoms()).sum(),
        }
    }

    /// Renders with variable and label names taken from `vars`.
    pub fn render(&self, vars: &[DecisionVar]) -> String {
        let mut s = String::new();
        self.render_into(vars, &mut s);
        s
    }

    fn render_into(&self, vars: &[DecisionVar], out: &mut String) {
        let join = |xs: &[GroundFormula], sep: &str, out: &mut String| {
            out.push('(');
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.push_str(sep);
                }
                x.render_into(vars, out);
            }
            out.push(')');
        };
        match self {
            GroundFormula::Const(b) => {
                let _ = write!(out, "{b}");
            }
            GroundFormula::Lit { var, label } => {
                let v = &vars[*var];
                if v.categorical {
                    let _ = write!(out, "{}={}", v.name, v.labels[*label]);
                } else if *label == 1 {
                    out.push_str(&v.name);
                } else {
                    let _ = write!(out, "!{}", v.name);
                }
            }
            GroundFormula::Not(x) => {
                out.push('!');
                x.render_into(vars, out);
            }
            GroundFormula::And(xs) if xs.is_empty() => out.push_str("true"),
            GroundFormula::Or(xs) if xs.is_empty() => out.push_str("false"),
            GroundFormula::And(xs) => join(xs, " & ", out),
            GroundFormula::Or(xs) => join(xs, " | ", out),
            GroundFormula::Implies(x, y) => {
                out.push('(');
                x.render_into(vars, out);
                out.push_str(" -> ");
                y.render_into(vars, out);
                out.push(')');
            }
            GroundFormula::Iff(x, y) => {
                out.push('(');
                x.render_into(vars, out);
                out.push_str(" <-> ");
                y.render_into(vars, out);
                out.push(')');
            }
            GroundFormula::Count { kind, k, elems } => {
                let _ = write!(out, "{}({k})", kind.keyword());
                out.push('{');
                for (i, x) in elems.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    x.render_into(vars, out);
                }
                out.push('}');
            }
        }
    }
}

/// One ground constraint with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundConstraint {
    /// Source constraint name.
    pub template: String,
    /// Position among the ground constraints of the same template.
    pub index: usize,
    pub weight: Option<f64>,
    /// Free-variable and top-level quantifier bindings, in binding order.
    pub bindings: Vec<(String, i64)>,
    pub formula: GroundFormula,
    /// Sorted decision variables the formula touches.
    pub scope: Vec<usize>,
}

impl GroundConstraint {
    pub fn id(&self) -> String {
        format!("{}[{}]", self.template, self.index)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundProgram {
    pub vars: Vec<DecisionVar>,
    pub constraints: Vec<GroundConstraint>,
}

impl GroundProgram {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v.name == name)
    }

    pub fn n_labels(&self) -> Vec<usize> {
        self.vars.iter().map(|v| v.n_labels()).collect()
    }

    /// Size of the full assignment space, saturating.
    pub fn space_size(&self) -> u128 {
        self.vars
            .iter()
            .fold(1u128, |acc, v| acc.saturating_mul(v.n_labels() as u128))
    }

    /// Distinct template names in first-occurrence order.
    pub fn templates(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for c in &self.constraints {
            if seen.insert(c.template.as_str()) {
                out.push(c.template.clone());
            }
        }
        out
    }

    /// Text dump for inspection.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "variables {}", self.vars.len());
        for (i, v) in self.vars.iter().enumerate() {
            let _ = writeln!(s, "  {i} {} [{}]", v.name, v.labels.join(", "));
        }
        let _ = writeln!(s, "constraints {}", self.constraints.len());
        for c in &self.constraints {
            let b: Vec<String> = c.bindings.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let _ = writeln!(
                s,
                "  {} {{{}}}: {}",
                c.id(),
                b.join(", "),
                c.formula.render(&self.vars)
            );
        }
        s
    }
}

/// Per-constraint truth values under a complete assignment.
pub fn eval_ground(g: &GroundProgram, a: &[usize]) -> Result<Vec<bool>, LangError> {
    check_assignment(g, a)?;
    Ok(g.constraints.iter().map(|c| c.formula.eval(a)).collect())
}

pub(crate) fn check_assignment(g: &GroundProgram, a: &[usize]) -> Result<(), LangError> {
    if a.len() != g.vars.len() {
        return Err(LangError::PartialAssignment {
            expected: g.vars.len(),
            found: a.len(),
        });
    }
    for (v, &l) in g.vars.iter().zip(a) {
        if l >= v.n_labels() {
            return Err(LangError::BadLabel {
                var: v.name.clone(),
                label: l,
                n_labels: v.n_labels(),
            });
        }
    }
    Ok(())
}

pub fn ground_program(p: &ConstraintProgram, inst: &Instance) -> Result<GroundProgram, LangError> {
    ground_program_with_cap(p, inst, DEFAULT_GROUND_CAP)
}

pub fn ground_program_with_cap(
    p: &ConstraintProgram,
    inst: &Instance,
    cap: usize,
) -> Result<GroundProgram, LangError> {
    let mut g = Grounder::new(p, inst, cap);
    for key in &inst.variables {
        g.var_for(&key.pred, &key.args)?;
    }
    for c in &p.constraints {
        g.constraint(c)?;
    }
    Ok(GroundProgram {
        vars: g.vars,
        constraints: g.out,
    })
}

/// Integer values and display names of a domain's elements.
pub(crate) struct DomainInfo {
    pub values: Vec<i64>,
    pub names: Vec<String>,
    lo: i64,
    symbolic: bool,
}

impl DomainInfo {
    /// Position of value `v` in the domain.
    pub fn index_of(&self, v: i64) -> Option<usize> {
        let i = v - self.lo;
        (i >= 0 && (i as usize) < self.values.len()).then_some(i as usize)
    }

    fn symbol(&self, s: &str) -> Option<i64> {
        if !self.symbolic {
            return None;
        }
        self.names.iter().position(|n| n == s).map(|i| i as i64)
    }
}

pub(crate) fn domain_info(
    p: &ConstraintProgram,
    inst: &Instance,
    name: &str,
) -> Result<DomainInfo, LangError> {
    let d = p
        .domain(name)
        .ok_or_else(|| LangError::Ground(format!("undeclared domain `{name}`")))?;
    Ok(match &d.kind {
        DomainKind::Range { lo, hi } => {
            let values: Vec<i64> = (*lo..=*hi).collect();
            DomainInfo {
                names: values.iter().map(|v| v.to_string()).collect(),
                values,
                lo: *lo,
                symbolic: false,
            }
        }
        DomainKind::Symbols(s) => DomainInfo {
            values: (0..s.len() as i64).collect(),
            names: s.clone(),
            lo: 0,
            symbolic: true,
        },
        DomainKind::Open => {
            let n = *inst
                .domain_sizes
                .get(name)
                .ok_or_else(|| LangError::UnboundedDomain(name.to_string()))?;
            DomainInfo {
                values: (0..n as i64).collect(),
                names: (0..n).map(|v| v.to_string()).collect(),
                lo: 0,
                symbolic: false,
            }
        }
    })
}

/// Name → value environment; later entries shadow earlier ones.
#[derive(Default, Clone)]
pub(crate) struct Env(Vec<(String, i64)>);

impl Env {
    pub fn get(&self, n: &str) -> Option<i64> {
        self.0.iter().rev().find(|(k, _)| k == n).map(|(_, v)| *v)
    }
    pub fn push(&mut self, n: &str, v: i64) {
        self.0.push((n.to_string(), v));
    }
    pub fn pop(&mut self) {
        self.0.pop();
    }
}

pub(crate) fn eval_term(t: &Term, env: &Env, dom: Option<&DomainInfo>) -> Result<i64, LangError> {
    Ok(match &t.kind {
        TermKind::Int(i) => *i,
        TermKind::Name(n) => match env.get(n) {
            Some(v) => v,
            None => match dom.and_then(|d| d.symbol(n)) {
                Some(v) => v,
                None => {
                    return Err(if dom.is_some() {
                        LangError::Ground(format!(
                            "{}:{}: `{n}` is not bound and not a symbol of the argument domain",
                            t.span.line, t.span.col
                        ))
                    } else {
                        LangError::Guard(format!(
                            "{}:{}: `{n}` is not an integer-valued bound variable",
                            t.span.line, t.span.col
                        ))
                    })
                }
            },
        },
        TermKind::Neg(x) => -eval_term(x, env, None)?,
        TermKind::Binary { op, lhs, rhs } => {
            let a = eval_term(lhs, env, None)?;
            let b = eval_term(rhs, env, None)?;
            match op {
                ArithOp::Add => a + b,
                ArithOp::Sub => a - b,
                ArithOp::Mul => a * b,
                ArithOp::Div | ArithOp::Rem if b == 0 => {
                    return Err(LangError::Guard(format!(
                        "{}:{}: division by zero",
                        t.span.line, t.span.col
                    )))
                }
                ArithOp::Div => a.div_euclid(b),
                ArithOp::Rem => a.rem_euclid(b),
            }
        }
    })
}

pub(crate) fn eval_guard(g: &Guard, env: &Env) -> Result<bool, LangError> {
    Ok(match &g.kind {
        GuardKind::Const(b) => *b,
        GuardKind::Cmp { op, lhs, rhs } => op.apply(eval_term(lhs, env, None)?, eval_term(rhs, env, None)?),
        GuardKind::Not(x) => !eval_guard(x, env)?,
        GuardKind::And(a, b) => eval_guard(a, env)? && eval_guard(b, env)?,
        GuardKind::Or(a, b) => eval_guard(a, env)? || eval_guard(b, env)?,
    })
}

/// Free variables of the program referenced by `f`, in first-use order.
pub(crate) fn free_refs(p: &ConstraintProgram, f: &Formula) -> Vec<String> {
    fn term(t: &Term, bound: &[String], p: &ConstraintProgram, out: &mut Vec<String>) {
        let mut ns = Vec::new();
        t.names(&mut ns);
        for (n, _) in ns {
            if !bound.contains(&n) && p.free_domain(&n).is_some() && !out.contains(&n) {
                out.push(n);
            }
        }
    }
    fn guard(g: &Guard, bound: &[String], p: &ConstraintProgram, out: &mut Vec<String>) {
        let mut ns = Vec::new();
        g.names(&mut ns);
        for (n, _) in ns {
            if !bound.contains(&n) && p.free_domain(&n).is_some() && !out.contains(&n) {
                out.push(n);
            }
        }
    }
    fn go(f: &Formula, bound: &mut Vec<String>, p: &ConstraintProgram, out: &mut Vec<String>) {
        match &f.kind {
            FormulaKind::Const(_) => {}
            FormulaKind::Atom(a) => a.args.iter().for_each(|t| term(t, bound, p, out)),
            FormulaKind::Not(x) => go(x, bound, p, out),
            FormulaKind::And(xs) | FormulaKind::Or(xs) => {
                xs.iter().for_each(|x| go(x, bound, p, out))
            }
            FormulaKind::Implies(a, b) | FormulaKind::Iff(a, b) => {
                go(a, bound, p, out);
                go(b, bound, p, out);
            }
            FormulaKind::Quant {
                binders,
                guard: g,
                body,
                ..
            } => {
                let n = bound.len();
                bound.extend(binders.iter().map(|b| b.var.clone()));
                if let Some(g) = g {
                    guard(g, bound, p, out);
                }
                go(body, bound, p, out);
                bound.truncate(n);
            }
            FormulaKind::Count { elems, .. } => {
                for e in elems {
                    let n = bound.len();
                    bound.extend(e.binders.iter().map(|b| b.var.clone()));
                    if let Some(g) = &e.guard {
                        guard(g, bound, p, out);
                    }
                    go(&e.formula, bound, p, out);
                    bound.truncate(n);
                }
            }
        }
    }
    let mut out = Vec::new();
    go(f, &mut Vec::new(), p, &mut out);
    out
}

/// Resolves one row of free-variable bindings into environment entries.
pub(crate) fn bind_row(
    p: &ConstraintProgram,
    inst: &Instance,
    constraint: &str,
    free: &[String],
    row: &BTreeMap<String, BindingValue>,
) -> Result<Vec<(String, i64)>, LangError> {
    let mut out = Vec::new();
    for v in free {
        let dom_name = p.free_domain(v).expect("free var has a domain");
        let dom = domain_info(p, inst, dom_name)?;
        let val = match row.get(v) {
            None => {
                return Err(LangError::Ground(format!(
                    "constraint `{constraint}`: binding row does not bind free variable `{v}`"
                )))
            }
            Some(BindingValue::Int(i)) => *i,
            Some(BindingValue::Sym(s)) => dom.symbol(s).ok_or_else(|| {
                LangError::Ground(format!("`{s}` is not a symbol of domain `{dom_name}`"))
            })?,
        };
        if dom.index_of(val).is_none() {
            return Err(LangError::Ground(format!(
                "constraint `{constraint}`: value {val} for `{v}` is outside domain `{dom_name}`"
            )));
        }
        out.push((v.clone(), val));
    }
    Ok(out)
}

/// Binding rows that apply to a constraint.
pub(crate) fn rows_for<'i>(
    inst: &'i Instance,
    name: &str,
    free: &[String],
) -> Vec<&'i BTreeMap<String, BindingValue>> {
    static EMPTY: BTreeMap<String, BindingValue> = BTreeMap::new();
    if free.is_empty() {
        return vec![&EMPTY];
    }
    inst.bindings
        .get(name)
        .or_else(|| inst.bindings.get("*"))
        .map(|rows| rows.iter().collect())
        .unwrap_or_default()
}

struct Grounder<'a> {
    p: &'a ConstraintProgram,
    inst: &'a Instance,
    cap: usize,
    atoms: usize,
    vars: Vec<DecisionVar>,
    index: HashMap<(String, Vec<i64>), usize>,
    domains: HashMap<String, std::rc::Rc<DomainInfo>>,
    out: Vec<GroundConstraint>,
}

impl<'a> Grounder<'a> {
    fn new(p: &'a ConstraintProgram, inst: &'a Instance, cap: usize) -> Self {
        Grounder {
            p,
            inst,
            cap,
            atoms: 0,
            vars: Vec::new(),
            index: HashMap::new(),
            domains: HashMap::new(),
            out: Vec::new(),
        }
    }

    fn dom(&mut self, name: &str) -> Result<std::rc::Rc<DomainInfo>, LangError> {
        if let Some(d) = self.domains.get(name) {
            return Ok(d.clone());
        }
        let d = std::rc::Rc::new(domain_info(self.p, self.inst, name)?);
        self.domains.insert(name.to_string(), d.clone());
        Ok(d)
    }

    fn var_for(&mut self, pred: &str, key: &[i64]) -> Result<usize, LangError> {
        if let Some(&i) = self.index.get(&(pred.to_string(), key.to_vec())) {
            return Ok(i);
        }
        let decl = self
            .p
            .pred(pred)
            .ok_or_else(|| LangError::Ground(format!("undeclared predicate `{pred}`")))?;
        if key.len() != decl.key_arity() {
            return Err(LangError::Ground(format!(
                "variable `{pred}` needs {} key argument(s), got {}",
                decl.key_arity(),
                key.len()
            )));
        }
        let mut parts = Vec::new();
        for (v, dn) in key.iter().zip(&decl.arg_domains) {
            let d = self.dom(dn)?;
            let i = d.index_of(*v).ok_or_else(|| {
                LangError::Ground(format!("argument {v} of `{pred}` is outside domain `{dn}`"))
            })?;
            parts.push(d.names[i].clone());
        }
        let labels = if decl.categorical {
            let last = decl.arg_domains.last().expect("categorical predicate has a label domain");
            self.dom(last)?.names.clone()
        } else {
            vec!["false".to_string(), "true".to_string()]
        };
        let name = if parts.is_empty() {
            pred.to_string()
        } else {
            format!("{pred}({})", parts.join(","))
        };
        let id = self.vars.len();
        self.vars.push(DecisionVar {
            name,
            pred: pred.to_string(),
            args: key.to_vec(),
            categorical: decl.categorical,
            labels,
        });
        self.index.insert((pred.to_string(), key.to_vec()), id);
        Ok(id)
    }

    fn constraint(&mut self, c: &Constraint) -> Result<(), LangError> {
        let free = free_refs(self.p, &c.formula);
        let rows = rows_for(self.inst, &c.name, &free);
        let mut index = 0;
        for row in rows {
            let bound = bind_row(self.p, self.inst, &c.name, &free, row)?;
            let mut env = Env::default();
            for (k, v) in &bound {
                env.push(k, *v);
            }
            // peel the leading chain of universal quantifiers
            let mut binders: Vec<(&Binder, Option<&Guard>, bool)> = Vec::new();
            let mut body = &c.formula;
            while let FormulaKind::Quant {
                q: Quantifier::Forall,
                binders: bs,
                guard,
                body: inner,
            } = &body.kind
            {
                for (i, b) in bs.iter().enumerate() {
                    let last = i + 1 == bs.len();
                    binders.push((b, if last { guard.as_ref() } else { None }, last));
                }
                body = inner;
            }
            let mut trail = bound.clone();
            self.split(c, &binders, body, &mut env, &mut trail, &mut index)?;
        }
        Ok(())
    }

    fn split(
        &mut self,
        c: &Constraint,
        binders: &[(&Binder, Option<&Guard>, bool)],
        body: &Formula,
        env: &mut Env,
        trail: &mut Vec<(String, i64)>,
        index: &mut usize,
    ) -> Result<(), LangError> {
        let Some(((b, guard, _), rest)) = binders.split_first() else {
            let formula = self.formula(body, env)?;
            let scope = formula.vars();
            self.out.push(GroundConstraint {
                template: c.name.clone(),
                index: *index,
                weight: c.weight,
                bindings: trail.clone(),
                formula,
                scope,
            });
            *index += 1;
            return Ok(());
        };
        let d = self.dom(&b.domain)?;
        for &v in &d.values {
            env.push(&b.var, v);
            trail.push((b.var.clone(), v));
            let keep = match guard {
                Some(g) => eval_guard(g, env)?,
                None => true,
            };
            if keep {
                self.split(c, rest, body, env, trail, index)?;
            }
            trail.pop();
            env.pop();
        }
        Ok(())
    }

    /// All environments produced by `binders` that pass `guard`.
    fn expand<F>(
        &mut self,
        binders: &[Binder],
        guard: Option<&Guard>,
        env: &mut Env,
        f: &mut F,
    ) -> Result<(), LangError>
    where
        F: FnMut(&mut Self, &mut Env) -> Result<(), LangError>,
    {
        let Some((b, rest)) = binders.split_first() else {
            let keep = match guard {
                Some(g) => eval_guard(g, env)?,
                None => true,
            };
            return if keep { f(self, env) } else { Ok(()) };
        };
        let d = self.dom(&b.domain)?;
        for &v in &d.values {
            env.push(&b.var, v);
            self.expand(rest, guard, env, f)?;
            env.pop();
        }
        Ok(())
    }

    fn formula(&mut self, f: &Formula, env: &mut Env) -> Result<GroundFormula, LangError> {
        Ok(match &f.kind {
            FormulaKind::Const(b) => GroundFormula::Const(*b),
            FormulaKind::Atom(a) => self.atom(a, env)?,
            FormulaKind::Not(x) => GroundFormula::not(self.formula(x, env)?),
            FormulaKind::And(xs) => GroundFormula::And(
                xs.iter().map(|x| self.formula(x, env)).collect::<Result<_, _>>()?,
            ),
            FormulaKind::Or(xs) => GroundFormula::Or(
                xs.iter().map(|x| self.formula(x, env)).collect::<Result<_, _>>()?,
            ),
            FormulaKind::Implies(a, b) => {
                GroundFormula::implies(self.formula(a, env)?, self.formula(b, env)?)
            }
            FormulaKind::Iff(a, b) => GroundFormula::iff(self.formula(a, env)?, self.formula(b, env)?),
            FormulaKind::Quant {
                q,
                binders,
                guard,
                body,
            } => {
                let mut parts = Vec::new();
                self.expand(binders, guard.as_ref(), env, &mut |g, env| {
                    parts.push(g.formula(body, env)?);
                    Ok(())
                })?;
                match q {
                    Quantifier::Forall => GroundFormula::And(parts),
                    Quantifier::Exists => GroundFormula::Or(parts),
                }
            }
            FormulaKind::Count { kind, k, elems } => {
                let mut parts = Vec::new();
                for e in elems {
                    if e.binders.is_empty() {
                        parts.push(self.formula(&e.formula, env)?);
                    } else {
                        self.expand(&e.binders, e.guard.as_ref(), env, &mut |g, env| {
                            parts.push(g.formula(&e.formula, env)?);
                            Ok(())
                        })?;
                    }
                }
                GroundFormula::Count {
                    kind: *kind,
                    k: *k as usize,
                    elems: parts,
                }
            }
        })
    }

    fn atom(&mut self, a: &Atom, env: &Env) -> Result<GroundFormula, LangError> {
        let decl = self
            .p
            .pred(&a.pred)
            .ok_or_else(|| LangError::Ground(format!("undeclared predicate `{}`", a.pred)))?;
        if decl.arity() != a.args.len() {
            return Err(LangError::Ground(format!(
                "predicate `{}` has arity {} but is used with {} argument(s)",
                a.pred,
                decl.arity(),
                a.args.len()
            )));
        }
        let doms = decl.arg_domains.clone();
        let categorical = decl.categorical;
        let mut vals = Vec::with_capacity(a.args.len());
        for (t, dn) in a.args.iter().zip(&doms) {
            let d = self.dom(dn)?;
            vals.push(eval_term(t, env, Some(&d))?);
        }
        self.atoms += 1;
        if self.atoms > self.cap {
            return Err(LangError::GroundingCap { cap: self.cap });
        }
        if categorical {
            let label_val = vals.pop().expect("categorical predicate has a label argument");
            let d = self.dom(doms.last().expect("label domain"))?;
            let label = d.index_of(label_val).ok_or_else(|| {
                LangError::Ground(format!(
                    "label {label_val} of `{}` is outside domain `{}`",
                    a.pred,
                    doms.last().unwrap()
                ))
            })?;
            let var = self.var_for(&a.pred, &vals)?;
            Ok(GroundFormula::lit(var, label))
        } else {
            let var = self.var_for(&a.pred, &vals)?;
            Ok(GroundFormula::lit(var, 1))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    #[test]
    fn forall_over_two_elements_gives_two_atoms() {
        let p = parse_program("domain B = {a, b}; pred p(B); constraint c: forall x in B: p(x);").unwrap();
        let g = ground_program(&p, &Instance::default()).unwrap();
        assert_eq!(g.constraints.len(), 2);
        let total: usize = g.constraints.iter().map(|c| c.formula.n_atoms()).sum();
        assert_eq!(total, 2);
        assert_eq!(g.vars.len(), 2);
        assert_eq!(g.vars[0].name, "p(a)");
    }

    #[test]
    fn nested_forall_is_a_conjunction() {
        let p = parse_program("domain B = 0..1; pred p(B); constraint c: !false & (forall x in B: p(x));").unwrap();
        let g = ground_program(&p, &Instance::default()).unwrap();
        assert_eq!(g.constraints.len(), 1);
        let GroundFormula::And(xs) = &g.constraints[0].formula else { panic!() };
        assert!(matches!(&xs[1], GroundFormula::And(inner) if inner.len() == 2));
    }

    #[test]
    fn guard_prunes_bindings() {
        let p = parse_program("domain D = 0..9; pred p(D); constraint c: forall x in D where x % 3 == 0: p(x);").unwrap();
        let g = ground_program(&p, &Instance::default()).unwrap();
        assert_eq!(g.constraints.len(), 4);
    }

    #[test]
    fn open_domain_needs_size() {
        let p = parse_program("domain N; pred p(N); constraint c: forall x in N: p(x);").unwrap();
        assert!(matches!(
            ground_program(&p, &Instance::default()),
            Err(LangError::UnboundedDomain(_))
        ));
        let g = ground_program(&p, &Instance::default().with_domain("N", 3)).unwrap();
        assert_eq!(g.constraints.len(), 3);
    }

    #[test]
    fn cap_is_enforced() {
        let p = parse_program("domain D = 0..99; pred p(D, D); constraint c: forall x, y in D: p(x, y);").unwrap();
        let e = ground_program_with_cap(&p, &Instance::default(), 500).unwrap_err();
        assert_eq!(e, LangError::GroundingCap { cap: 500 });
    }

    #[test]
    fn symbol_in_guard_is_rejected() {
        let p = parse_program("domain B = {a, b}; pred p(B); constraint c: forall x in B where x != a: p(x);").unwrap();
        assert!(matches!(ground_program(&p, &Instance::default()), Err(LangError::Guard(_))));
    }

    #[test]
    fn bindings_drive_free_variables() {
        let p = parse_program(
            "domain N; domain L = 0..2; pred y(N, L) categorical; free a, b in N;
             constraint same: forall l in L: y(a, l) <-> y(b, l);",
        )
        .unwrap();
        let mut inst = Instance::default().with_domain("N", 4);
        inst.add_row("same", [("a", BindingValue::Int(0)), ("b", BindingValue::Int(3))]);
        inst.add_row("same", [("a", BindingValue::Int(1)), ("b", BindingValue::Int(2))]);
        let g = ground_program(&p, &inst).unwrap();
        assert_eq!(g.constraints.len(), 6);
        assert_eq!(g.constraints[0].bindings, vec![("a".into(), 0), ("b".into(), 3), ("l".into(), 0)]);
        assert_eq!(g.vars.len(), 4);
        let none = ground_program(&p, &Instance::default().with_domain("N", 4)).unwrap();
        assert!(none.constraints.is_empty());
    }

    #[test]
    fn eval_rejects_bad_assignments() {
        let p = parse_program("domain L = 0..2; pred y(L) categorical; constraint c: y(1);").unwrap();
        let g = ground_program(&p, &Instance::default()).unwrap();
        assert_eq!(eval_ground(&g, &[1]).unwrap(), vec![true]);
        assert!(matches!(eval_ground(&g, &[]), Err(LangError::PartialAssignment { .. })));
        assert!(matches!(eval_ground(&g, &[3]), Err(LangError::BadLabel { .. })));
    }

    #[test]
    fn exactly_one_over_ten_labels() {
        let p = parse_program(
            "domain D = 0..9; pred d(D); constraint one: exactly(1){d(k) for k in D};",
        )
        .unwrap();
        let g = ground_program(&p, &Instance::default()).unwrap();
        let mut a = vec![0; 10];
        a[4] = 1;
        assert_eq!(eval_ground(&g, &a).unwrap(), vec![true]);
        a[5] = 1;
        assert_eq!(eval_ground(&g, &a).unwrap(), vec![false]);
    }
}
