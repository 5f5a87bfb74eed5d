use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use super::ast::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagCode {
    UnknownDomain,
    EmptyDomain,
    UnknownPredicate,
    ArityMismatch,
    UnboundVariable,
    ArgDomainMismatch,
    KExceedsSetSize,
    GuardUnboundName,
    DuplicateConstraint,
    DuplicateFreeVariable,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::UnknownDomain => "unknown-domain",
            DiagCode::EmptyDomain => "empty-domain",
            DiagCode::UnknownPredicate => "unknown-predicate",
            DiagCode::ArityMismatch => "arity-mismatch",
            DiagCode::UnboundVariable => "unbound-variable",
            DiagCode::ArgDomainMismatch => "arg-domain-mismatch",
            DiagCode::KExceedsSetSize => "k-exceeds-set-size",
            DiagCode::GuardUnboundName => "guard-unbound-name",
            DiagCode::DuplicateConstraint => "duplicate-constraint",
            DiagCode::DuplicateFreeVariable => "duplicate-free-variable",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub message: String,
    pub span: Span,
}

impl Diagnostic {
    /// `file:line:col: code message`
    pub fn render(&self, file: &str) -> String {
        format!(
            "{file}:{}:{}: {} {}",
            self.span.line, self.span.col, self.code, self.message
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}: {} {}",
            self.span.line, self.span.col, self.code, self.message
        )
    }
}

/// Statically known size of a domain, if any.
pub fn static_domain_size(d: &DomainDecl) -> Option<usize> {
    match &d.kind {
        DomainKind::Range { lo, hi } => Some(if hi < lo { 0 } else { (hi - lo + 1) as usize }),
        DomainKind::Symbols(s) => Some(s.len()),
        DomainKind::Open => None,
    }
}

struct Checker<'a> {
    prog: &'a ConstraintProgram,
    diags: Vec<Diagnostic>,
}

pub fn validate_program(prog: &ConstraintProgram) -> Vec<Diagnostic> {
    let mut c = Checker {
        prog,
        diags: Vec::new(),
    };
    c.run();
    c.diags
}

impl<'a> Checker<'a> {
    fn push(&mut self, code: DiagCode, span: Span, message: String) {
        self.diags.push(Diagnostic {
            code,
            message,
            span,
        });
    }

    fn run(&mut self) {
        for d in &self.prog.domains {
            if let DomainKind::Range { lo, hi } = d.kind {
                if hi < lo {
                    self.push(
                        DiagCode::EmptyDomain,
                        d.span,
                        format!("domain `{}` range {lo}..{hi} is empty", d.name),
                    );
                }
            }
        }
        for p in &self.prog.preds {
            for dom in &p.arg_domains {
                if self.prog.domain(dom).is_none() {
                    self.push(
                        DiagCode::UnknownDomain,
                        p.span,
                        format!("predicate `{}` uses undeclared domain `{dom}`", p.name),
                    );
                }
            }
        }
        let mut free_seen = BTreeSet::new();
        for f in &self.prog.free {
            if self.prog.domain(&f.domain).is_none() {
                self.push(
                    DiagCode::UnknownDomain,
                    f.span,
                    format!("free variables use undeclared domain `{}`", f.domain),
                );
            }
            for v in &f.vars {
                if !free_seen.insert(v.clone()) {
                    self.push(
                        DiagCode::DuplicateFreeVariable,
                        f.span,
                        format!("free variable `{v}` declared more than once"),
                    );
                }
            }
        }
        let mut names = BTreeSet::new();
        for c in &self.prog.constraints {
            if !names.insert(c.name.clone()) {
                self.push(
                    DiagCode::DuplicateConstraint,
                    c.span,
                    format!("constraint name `{}` is not unique", c.name),
                );
            }
            let mut scope: BTreeMap<String, String> = BTreeMap::new();
            for f in &self.prog.free {
                for v in &f.vars {
                    scope.insert(v.clone(), f.domain.clone());
                }
            }
            self.formula(&c.formula, &mut scope);
        }
    }

    fn bind(&mut self, binders: &[Binder], scope: &mut BTreeMap<String, String>) -> Vec<(String, Option<String>)> {
        let mut saved = Vec::new();
        for b in binders {
            if self.prog.domain(&b.domain).is_none() {
                self.push(
                    DiagCode::UnknownDomain,
                    b.span,
                    format!("quantifier over undeclared domain `{}`", b.domain),
                );
            }
            saved.push((b.var.clone(), scope.insert(b.var.clone(), b.domain.clone())));
        }
        saved
    }

    fn unbind(scope: &mut BTreeMap<String, String>, saved: Vec<(String, Option<String>)>) {
        for (v, old) in saved.into_iter().rev() {
            match old {
                Some(d) => scope.insert(v, d),
                None => scope.remove(&v),
            };
        }
    }

    fn guard(&mut self, g: &Guard, scope: &BTreeMap<String, String>) {
        let mut names = Vec::new();
        g.names(&mut names);
        for (n, span) in names {
            if !scope.contains_key(&n) {
                self.push(
                    DiagCode::GuardUnboundName,
                    span,
                    format!("guard references `{n}`, which is not a bound variable"),
                );
            }
        }
    }

    fn binder_count(&self, binders: &[Binder]) -> Option<usize> {
        let mut n = 1usize;
        for b in binders {
            n = n.checked_mul(static_domain_size(self.prog.domain(&b.domain)?)?)?;
        }
        Some(n)
    }

    fn formula(&mut self, f: &Formula, scope: &mut BTreeMap<String, String>) {
        match &f.kind {
            FormulaKind::Const(_) => {}
            FormulaKind::Atom(a) => self.atom(a, f.span, scope),
            FormulaKind::Not(x) => self.formula(x, scope),
            FormulaKind::And(xs) | FormulaKind::Or(xs) => {
                for x in xs {
                    self.formula(x, scope);
                }
            }
            FormulaKind::Implies(a, b) | FormulaKind::Iff(a, b) => {
                self.formula(a, scope);
                self.formula(b, scope);
            }
            FormulaKind::Quant {
                binders,
                guard,
                body,
                ..
            } => {
                let saved = self.bind(binders, scope);
                if let Some(g) = guard {
                    self.guard(g, scope);
                }
                self.formula(body, scope);
                Self::unbind(scope, saved);
            }
            FormulaKind::Count { k, elems, .. } => {
                let mut size = Some(0usize);
                for e in elems {
                    let saved = self.bind(&e.binders, scope);
                    if let Some(g) = &e.guard {
                        self.guard(g, scope);
                    }
                    self.formula(&e.formula, scope);
                    Self::unbind(scope, saved);
                    // guarded comprehensions have no static size
                    let n = if e.guard.is_some() {
                        None
                    } else {
                        self.binder_count(&e.binders)
                    };
                    size = match (size, n) {
                        (Some(a), Some(b)) => Some(a + b),
                        _ => None,
                    };
                }
                if let Some(n) = size {
                    if *k as usize > n {
                        self.push(
                            DiagCode::KExceedsSetSize,
                            f.span,
                            format!("count bound {k} exceeds the size {n} of the counted set"),
                        );
                    }
                }
            }
        }
    }

    fn atom(&mut self, a: &Atom, span: Span, scope: &BTreeMap<String, String>) {
        let Some(decl) = self.prog.pred(&a.pred) else {
            self.push(
                DiagCode::UnknownPredicate,
                span,
                format!("predicate `{}` is not declared", a.pred),
            );
            return;
        };
        if decl.arity() != a.args.len() {
            self.push(
                DiagCode::ArityMismatch,
                span,
                format!(
                    "predicate `{}` declared with arity {} but used with {} argument(s)",
                    a.pred,
                    decl.arity(),
                    a.args.len()
                ),
            );
            return;
        }
        for (arg, dom_name) in a.args.iter().zip(&decl.arg_domains) {
            let dom = self.prog.domain(dom_name);
            match &arg.kind {
                TermKind::Name(n) => {
                    if let Some(var_dom) = scope.get(n) {
                        if var_dom != dom_name {
                            self.push(
                                DiagCode::ArgDomainMismatch,
                                arg.span,
                                format!(
                                    "variable `{n}` ranges over `{var_dom}` but `{}` expects `{dom_name}`",
                                    a.pred
                                ),
                            );
                        }
                    } else if matches!(dom.map(|d| &d.kind), Some(DomainKind::Symbols(s)) if s.contains(n))
                    {
                        // symbol of the expected domain
                    } else if self.is_symbol_anywhere(n) {
                        self.push(
                            DiagCode::ArgDomainMismatch,
                            arg.span,
                            format!("symbol `{n}` is not an element of `{dom_name}`"),
                        );
                    } else {
                        self.push(
                            DiagCode::UnboundVariable,
                            arg.span,
                            format!("`{n}` is neither a bound variable nor a symbol"),
                        );
                    }
                }
                TermKind::Int(i) => {
                    let ok = match dom.map(|d| &d.kind) {
                        Some(DomainKind::Range { lo, hi }) => lo <= i && i <= hi,
                        Some(DomainKind::Symbols(s)) => *i >= 0 && (*i as usize) < s.len(),
                        _ => true,
                    };
                    if !ok {
                        self.push(
                            DiagCode::ArgDomainMismatch,
                            arg.span,
                            format!("literal {i} is outside domain `{dom_name}`"),
                        );
                    }
                }
                _ => {
                    let mut names = Vec::new();
                    arg.names(&mut names);
                    for (n, sp) in names {
                        if !scope.contains_key(&n) {
                            self.push(
                                DiagCode::UnboundVariable,
                                sp,
                                format!("`{n}` in an arithmetic argument is not a bound variable"),
                            );
                        }
                    }
                }
            }
        }
    }

    fn is_symbol_anywhere(&self, n: &str) -> bool {
        self.prog
            .domains
            .iter()
            .any(|d| matches!(&d.kind, DomainKind::Symbols(s) if s.iter().any(|x| x == n)))
    }
}
