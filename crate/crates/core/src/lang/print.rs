//! Canonical text rendering. `parse_syntax(&p.to_string())` yields a program
//! structurally equal to `p`.

use std::fmt::{self, Display, Write};

use super::ast::*;

impl Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_term(f, self, 0)
    }
}

fn write_term(out: &mut dyn Write, t: &Term, min_prec: u8) -> fmt::Result {
    let paren = t.precedence() < min_prec;
    if paren {
        out.write_char('(')?;
    }
    match &t.kind {
        TermKind::Name(n) => out.write_str(n)?,
        TermKind::Int(i) if *i < 0 => write!(out, "({i})")?,
        TermKind::Int(i) => write!(out, "{i}")?,
        TermKind::Neg(x) => {
            out.write_char('-')?;
            write_term(out, x, 3)?;
        }
        TermKind::Binary { op, lhs, rhs } => {
            let p = t.precedence();
            write_term(out, lhs, p)?;
            write!(out, " {} ", op.symbol())?;
            write_term(out, rhs, p + 1)?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

impl Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_guard(f, self, 0)
    }
}

fn guard_prec(g: &Guard) -> u8 {
    match g.kind {
        GuardKind::Or(..) => 1,
        GuardKind::And(..) => 2,
        GuardKind::Not(_) => 3,
        _ => 4,
    }
}

fn write_guard(out: &mut dyn Write, g: &Guard, min_prec: u8) -> fmt::Result {
    let p = guard_prec(g);
    let paren = p < min_prec;
    if paren {
        out.write_char('(')?;
    }
    match &g.kind {
        GuardKind::Const(b) => write!(out, "{b}")?,
        GuardKind::Cmp { op, lhs, rhs } => {
            write_term(out, lhs, 0)?;
            write!(out, " {} ", op.symbol())?;
            write_term(out, rhs, 0)?;
        }
        GuardKind::Not(x) => {
            out.write_char('!')?;
            write_guard(out, x, 3)?;
        }
        GuardKind::And(a, b) => {
            write_guard(out, a, 2)?;
            out.write_str(" & ")?;
            write_guard(out, b, 3)?;
        }
        GuardKind::Or(a, b) => {
            write_guard(out, a, 1)?;
            out.write_str(" | ")?;
            write_guard(out, b, 2)?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

fn formula_prec(f: &Formula) -> u8 {
    match f.kind {
        FormulaKind::Quant { .. } => 0,
        FormulaKind::Iff(..) => 1,
        FormulaKind::Implies(..) => 2,
        FormulaKind::Or(_) => 3,
        FormulaKind::And(_) => 4,
        FormulaKind::Not(_) => 5,
        _ => 6,
    }
}

fn write_binders(out: &mut dyn Write, bs: &[Binder]) -> fmt::Result {
    for (i, b) in bs.iter().enumerate() {
        if i > 0 {
            out.write_str(", ")?;
        }
        write!(out, "{} in {}", b.var, b.domain)?;
    }
    Ok(())
}

impl Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_formula(f, self, 0)
    }
}

fn write_formula(out: &mut dyn Write, f: &Formula, min_prec: u8) -> fmt::Result {
    let p = formula_prec(f);
    // quantifiers are only left bare at the top of a body
    let paren = p < min_prec;
    if paren {
        out.write_char('(')?;
    }
    match &f.kind {
        FormulaKind::Const(b) => write!(out, "{b}")?,
        FormulaKind::Atom(a) => {
            write!(out, "{}(", a.pred)?;
            for (i, t) in a.args.iter().enumerate() {
                if i > 0 {
                    out.write_str(", ")?;
                }
                write_term(out, t, 0)?;
            }
            out.write_char(')')?;
        }
        FormulaKind::Not(x) => {
            out.write_char('!')?;
            write_formula(out, x, 5)?;
        }
        FormulaKind::And(xs) => {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.write_str(" & ")?;
                }
                write_formula(out, x, 5)?;
            }
        }
        FormulaKind::Or(xs) => {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    out.write_str(" | ")?;
                }
                write_formula(out, x, 4)?;
            }
        }
        FormulaKind::Implies(a, b) => {
            write_formula(out, a, 3)?;
            out.write_str(" -> ")?;
            write_formula(out, b, 2)?;
        }
        FormulaKind::Iff(a, b) => {
            write_formula(out, a, 2)?;
            out.write_str(" <-> ")?;
            write_formula(out, b, 1)?;
        }
        FormulaKind::Quant {
            q,
            binders,
            guard,
            body,
        } => {
            out.write_str(match q {
                Quantifier::Forall => "forall ",
                Quantifier::Exists => "exists ",
            })?;
            write_binders(out, binders)?;
            if let Some(g) = guard {
                out.write_str(" where ")?;
                write_guard(out, g, 0)?;
            }
            out.write_str(": ")?;
            write_formula(out, body, 0)?;
        }
        FormulaKind::Count { kind, k, elems } => {
            write!(out, "{}({k}){{", kind.keyword())?;
            for (i, e) in elems.iter().enumerate() {
                if i > 0 {
                    out.write_str(", ")?;
                }
                write_formula(out, &e.formula, 1)?;
                if !e.binders.is_empty() {
                    out.write_str(" for ")?;
                    write_binders(out, &e.binders)?;
                    if let Some(g) = &e.guard {
                        out.write_str(" where ")?;
                        write_guard(out, g, 0)?;
                    }
                }
            }
            out.write_char('}')?;
        }
    }
    if paren {
        out.write_char(')')?;
    }
    Ok(())
}

impl Display for ConstraintProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in &self.domains {
            match &d.kind {
                DomainKind::Open => writeln!(f, "domain {};", d.name)?,
                DomainKind::Range { lo, hi } => writeln!(f, "domain {} = {lo}..{hi};", d.name)?,
                DomainKind::Symbols(s) => writeln!(f, "domain {} = {{{}}};", d.name, s.join(", "))?,
            }
        }
        for p in &self.preds {
            write!(f, "pred {}({})", p.name, p.arg_domains.join(", "))?;
            if p.categorical {
                f.write_str(" categorical")?;
            }
            f.write_str(";\n")?;
        }
        for d in &self.free {
            writeln!(f, "free {} in {};", d.vars.join(", "), d.domain)?;
        }
        for c in &self.constraints {
            write!(f, "constraint {}", c.name)?;
            if let Some(w) = c.weight {
                write!(f, " weight {w:?}")?;
            }
            writeln!(f, ": {};", c.formula)?;
        }
        Ok(())
    }
}
