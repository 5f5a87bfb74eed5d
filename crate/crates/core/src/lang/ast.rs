//! Syntax tree of the constraint language.

use serde::{Deserialize, Serialize};

/// Source location of a node: 1-based line/column of its first token plus
/// the byte range it covers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn to(self, other: Span) -> Span {
        Span {
            line: self.line,
            col: self.col,
            start: self.start,
            end: other.end.max(self.end),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
            ArithOp::Rem => "%",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div | ArithOp::Rem => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub kind: TermKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TermKind {
    /// A variable or a domain symbol; resolved during validation/grounding.
    Name(String),
    Int(i64),
    Neg(Box<Term>),
    Binary {
        op: ArithOp,
        lhs: Box<Term>,
        rhs: Box<Term>,
    },
}

impl Term {
    pub(crate) fn precedence(&self) -> u8 {
        match &self.kind {
            TermKind::Binary { op, .. } => op.precedence(),
            TermKind::Neg(_) => 3,
            _ => 4,
        }
    }

    /// Names referenced anywhere in the term.
    pub fn names(&self, out: &mut Vec<(String, Span)>) {
        match &self.kind {
            TermKind::Name(n) => out.push((n.clone(), self.span)),
            TermKind::Int(_) => {}
            TermKind::Neg(t) => t.names(out),
            TermKind::Binary { lhs, rhs, .. } => {
                lhs.names(out);
                rhs.names(out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub fn apply(self, a: i64, b: i64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }
}

/// Boolean filter over integer terms attached to quantifiers and comprehensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Guard {
    pub kind: GuardKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GuardKind {
    Const(bool),
    Cmp { op: CmpOp, lhs: Term, rhs: Term },
    Not(Box<Guard>),
    And(Box<Guard>, Box<Guard>),
    Or(Box<Guard>, Box<Guard>),
}

impl Guard {
    pub fn names(&self, out: &mut Vec<(String, Span)>) {
        match &self.kind {
            GuardKind::Const(_) => {}
            GuardKind::Cmp { lhs, rhs, .. } => {
                lhs.names(out);
                rhs.names(out);
            }
            GuardKind::Not(g) => g.names(out),
            GuardKind::And(a, b) | GuardKind::Or(a, b) => {
                a.names(out);
                b.names(out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantifier {
    Forall,
    Exists,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CountKind {
    Exactly,
    AtMost,
    AtLeast,
}

impl CountKind {
    pub fn keyword(self) -> &'static str {
        match self {
            CountKind::Exactly => "exactly",
            CountKind::AtMost => "atmost",
            CountKind::AtLeast => "atleast",
        }
    }

    pub fn holds(self, count: usize, k: usize) -> bool {
        match self {
            CountKind::Exactly => count == k,
            CountKind::AtMost => count <= k,
            CountKind::AtLeast => count >= k,
        }
    }
}

/// `var in Domain`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Binder {
    pub var: String,
    pub domain: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

/// One member of a counting set: a formula, optionally expanded by a
/// comprehension (`atom for x in D where G`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountElem {
    pub formula: Formula,
    pub binders: Vec<Binder>,
    pub guard: Option<Guard>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Formula {
    pub kind: FormulaKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FormulaKind {
    Const(bool),
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Iff(Box<Formula>, Box<Formula>),
    Quant {
        q: Quantifier,
        binders: Vec<Binder>,
        guard: Option<Guard>,
        body: Box<Formula>,
    },
    Count {
        kind: CountKind,
        k: u64,
        elems: Vec<CountElem>,
    },
}

impl Formula {
    pub fn new(kind: FormulaKind, span: Span) -> Self {
        Formula { kind, span }
    }

    /// Visits every node in pre-order.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Formula)) {
        f(self);
        match &self.kind {
            FormulaKind::Const(_) | FormulaKind::Atom(_) => {}
            FormulaKind::Not(a) => a.walk(f),
            FormulaKind::And(xs) | FormulaKind::Or(xs) => xs.iter().for_each(|x| x.walk(f)),
            FormulaKind::Implies(a, b) | FormulaKind::Iff(a, b) => {
                a.walk(f);
                b.walk(f);
            }
            FormulaKind::Quant { body, .. } => body.walk(f),
            FormulaKind::Count { elems, .. } => elems.iter().for_each(|e| e.formula.walk(f)),
        }
    }

    /// True if a quantifier or comprehension occurs anywhere below the
    /// leading chain of universal quantifiers.
    pub fn has_inner_quantifier(&self) -> bool {
        let mut node = self;
        while let FormulaKind::Quant {
            q: Quantifier::Forall,
            body,
            ..
        } = &node.kind
        {
            node = body;
        }
        let mut found = false;
        node.walk(&mut |n| match &n.kind {
            FormulaKind::Quant { .. } => found = true,
            FormulaKind::Count { elems, .. } => {
                if elems.iter().any(|e| !e.binders.is_empty()) {
                    found = true
                }
            }
            _ => {}
        });
        found
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DomainKind {
    /// Inclusive integer range.
    Range { lo: i64, hi: i64 },
    Symbols(Vec<String>),
    /// Size supplied by the grounding instance.
    Open,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDecl {
    pub name: String,
    pub kind: DomainKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredDecl {
    pub name: String,
    pub arg_domains: Vec<String>,
    /// Categorical predicates treat their last argument as the label of a
    /// decision variable identified by the remaining arguments.
    pub categorical: bool,
    pub span: Span,
}

impl PredDecl {
    pub fn arity(&self) -> usize {
        self.arg_domains.len()
    }

    /// Number of arguments that identify the decision variable.
    pub fn key_arity(&self) -> usize {
        if self.categorical {
            self.arg_domains.len() - 1
        } else {
            self.arg_domains.len()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeDecl {
    pub vars: Vec<String>,
    pub domain: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    /// `None` means hard.
    pub weight: Option<f64>,
    pub formula: Formula,
    pub span: Span,
}

/// A parsed constraint program.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintProgram {
    pub domains: Vec<DomainDecl>,
    pub preds: Vec<PredDecl>,
    pub free: Vec<FreeDecl>,
    pub constraints: Vec<Constraint>,
}

impl ConstraintProgram {
    pub fn domain(&self, name: &str) -> Option<&DomainDecl> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn pred(&self, name: &str) -> Option<&PredDecl> {
        self.preds.iter().find(|p| p.name == name)
    }

    pub fn constraint(&self, name: &str) -> Option<&Constraint> {
        self.constraints.iter().find(|c| c.name == name)
    }

    /// Domain of a declared free variable.
    pub fn free_domain(&self, var: &str) -> Option<&str> {
        self.free
            .iter()
            .find(|f| f.vars.iter().any(|v| v == var))
            .map(|f| f.domain.as_str())
    }

    /// Copy with every span zeroed, for structural comparison.
    pub fn without_spans(&self) -> ConstraintProgram {
        let mut p = self.clone();
        let z = Span::default();
        for d in &mut p.domains {
            d.span = z;
        }
        for d in &mut p.preds {
            d.span = z;
        }
        for d in &mut p.free {
            d.span = z;
        }
        for c in &mut p.constraints {
            c.span = z;
            strip_formula(&mut c.formula);
        }
        p
    }
}

fn strip_term(t: &mut Term) {
    t.span = Span::default();
    match &mut t.kind {
        TermKind::Neg(x) => strip_term(x),
        TermKind::Binary { lhs, rhs, .. } => {
            strip_term(lhs);
            strip_term(rhs);
        }
        _ => {}
    }
}

fn strip_guard(g: &mut Guard) {
    g.span = Span::default();
    match &mut g.kind {
        GuardKind::Const(_) => {}
        GuardKind::Cmp { lhs, rhs, .. } => {
            strip_term(lhs);
            strip_term(rhs);
        }
        GuardKind::Not(x) => strip_guard(x),
        GuardKind::And(a, b) | GuardKind::Or(a, b) => {
            strip_guard(a);
            strip_guard(b);
        }
    }
}

fn strip_binders(bs: &mut [Binder]) {
    for b in bs {
        b.span = Span::default();
    }
}

pub(crate) fn strip_formula(f: &mut Formula) {
    f.span = Span::default();
    match &mut f.kind {
        FormulaKind::Const(_) => {}
        FormulaKind::Atom(a) => a.args.iter_mut().for_each(strip_term),
        FormulaKind::Not(a) => strip_formula(a),
        FormulaKind::And(xs) | FormulaKind::Or(xs) => xs.iter_mut().for_each(strip_formula),
        FormulaKind::Implies(a, b) | FormulaKind::Iff(a, b) => {
            strip_formula(a);
            strip_formula(b);
        }
        FormulaKind::Quant {
            binders,
            guard,
            body,
            ..
        } => {
            strip_binders(binders);
            if let Some(g) = guard {
                strip_guard(g);
            }
            strip_formula(body);
        }
        FormulaKind::Count { elems, .. } => {
            for e in elems {
                strip_formula(&mut e.formula);
                strip_binders(&mut e.binders);
                if let Some(g) = &mut e.guard {
                    strip_guard(g);
                }
            }
        }
    }
}
