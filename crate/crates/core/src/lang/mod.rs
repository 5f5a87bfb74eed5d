//! The `.ncl` constraint language: syntax, validation, grounding.

pub mod ast;
pub mod ground;
pub mod lexer;
pub mod parser;
pub mod print;
pub mod semantics;
pub mod validate;

use std::collections::BTreeSet;

use thiserror::Error;

pub use ast::*;
pub use ground::{
    eval_ground, ground_program, ground_program_with_cap, BindingValue, DecisionVar, GroundConstraint,
    GroundFormula, GroundProgram, Instance, DEFAULT_GROUND_CAP,
};
pub use parser::{parse_formula, parse_syntax};
pub use validate::{validate_program, DiagCode, Diagnostic};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LangError {
    #[error("{line}:{col}: syntax error: {message}")]
    Syntax { line: u32, col: u32, message: String },
    #[error("{line}:{col}: duplicate {what} `{name}`")]
    Duplicate {
        what: &'static str,
        name: String,
        line: u32,
        col: u32,
    },
    #[error("{line}:{col}: predicate `{pred}` has arity {expected} but is used with {found} argument(s)")]
    Arity {
        pred: String,
        expected: usize,
        found: usize,
        line: u32,
        col: u32,
    },
    #[error("domain `{0}` has no finite size in the instance")]
    UnboundedDomain(String),
    #[error("guard evaluation failed: {0}")]
    Guard(String),
    #[error("cannot ground: {0}")]
    Ground(String),
    #[error("grounding produced more than {cap} ground atoms")]
    GroundingCap { cap: usize },
    #[error("assignment covers {found} of {expected} decision variables")]
    PartialAssignment { expected: usize, found: usize },
    #[error("label {label} is outside the {n_labels} labels of variable `{var}`")]
    BadLabel {
        var: String,
        label: usize,
        n_labels: usize,
    },
}

/// Parses a program and checks declaration uniqueness and predicate arity.
pub fn parse_program(src: &str) -> Result<ConstraintProgram, LangError> {
    let prog = parse_syntax(src)?;
    let mut seen = BTreeSet::new();
    for d in &prog.domains {
        if !seen.insert(d.name.as_str()) {
            return Err(LangError::Duplicate {
                what: "domain",
                name: d.name.clone(),
                line: d.span.line,
                col: d.span.col,
            });
        }
    }
    let mut seen = BTreeSet::new();
    for p in &prog.preds {
        if !seen.insert(p.name.as_str()) {
            return Err(LangError::Duplicate {
                what: "predicate",
                name: p.name.clone(),
                line: p.span.line,
                col: p.span.col,
            });
        }
    }
    for c in &prog.constraints {
        let mut err = None;
        c.formula.walk(&mut |f| {
            if err.is_some() {
                return;
            }
            if let FormulaKind::Atom(a) = &f.kind {
                if let Some(decl) = prog.pred(&a.pred) {
                    if decl.arity() != a.args.len() {
                        err = Some(LangError::Arity {
                            pred: a.pred.clone(),
                            expected: decl.arity(),
                            found: a.args.len(),
                            line: f.span.line,
                            col: f.span.col,
                        });
                    }
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
    }
    Ok(prog)
}
