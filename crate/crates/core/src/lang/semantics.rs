//! Direct semantic evaluation of quantified constraints, without grounding.
//! Serves as the reference for grounding soundness.

use std::collections::HashMap;

use super::ast::*;
use super::ground::{bind_row, domain_info, eval_guard, eval_term, free_refs, rows_for, Env, GroundProgram, Instance};
use super::LangError;

/// Truth of constraint `name` under `a`, where `a` assigns labels to the
/// variables of `g` (which supplies the atom → variable mapping).
pub fn eval_constraint(
    p: &ConstraintProgram,
    inst: &Instance,
    g: &GroundProgram,
    name: &str,
    a: &[usize],
) -> Result<bool, LangError> {
    let c = p
        .constraint(name)
        .ok_or_else(|| LangError::Ground(format!("no constraint `{name}`")))?;
    let lookup: HashMap<(&str, &[i64]), usize> = g
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| ((v.pred.as_str(), v.args.as_slice()), i))
        .collect();
    let ev = Evaluator { p, inst, lookup, a };
    let free = free_refs(p, &c.formula);
    for row in rows_for(inst, name, &free) {
        let mut env = Env::default();
        for (k, v) in bind_row(p, inst, name, &free, row)? {
            env.push(&k, v);
        }
        if !ev.eval(&c.formula, &mut env)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Truth of every constraint of `p`, in declaration order.
pub fn eval_program(
    p: &ConstraintProgram,
    inst: &Instance,
    g: &GroundProgram,
    a: &[usize],
) -> Result<Vec<bool>, LangError> {
    p.constraints
        .iter()
        .map(|c| eval_constraint(p, inst, g, &c.name, a))
        .collect()
}

struct Evaluator<'a> {
    p: &'a ConstraintProgram,
    inst: &'a Instance,
    lookup: HashMap<(&'a str, &'a [i64]), usize>,
    a: &'a [usize],
}

impl Evaluator<'_> {
    fn eval(&self, f: &Formula, env: &mut Env) -> Result<bool, LangError> {
        match &f.kind {
            FormulaKind::Const(b) => Ok(*b),
            FormulaKind::Atom(at) => self.atom(at, env),
            FormulaKind::Not(x) => Ok(!self.eval(x, env)?),
            FormulaKind::And(xs) => {
                for x in xs {
                    if !self.eval(x, env)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            FormulaKind::Or(xs) => {
                for x in xs {
                    if self.eval(x, env)? {
                        return Ok(true);
                    }
                }
                Ok(false)
            }
            FormulaKind::Implies(x, y) => Ok(!self.eval(x, env)? || self.eval(y, env)?),
            FormulaKind::Iff(x, y) => Ok(self.eval(x, env)? == self.eval(y, env)?),
            FormulaKind::Quant {
                q,
                binders,
                guard,
                body,
            } => {
                let mut results = Vec::new();
                self.each(binders, guard.as_ref(), env, &mut |env| {
                    results.push(self.eval(body, env)?);
                    Ok(())
                })?;
                Ok(match q {
                    Quantifier::Forall => results.iter().all(|&b| b),
                    Quantifier::Exists => results.iter().any(|&b| b),
                })
            }
            FormulaKind::Count { kind, k, elems } => {
                let mut n = 0usize;
                for e in elems {
                    if e.binders.is_empty() {
                        n += self.eval(&e.formula, env)? as usize;
                    } else {
                        self.each(&e.binders, e.guard.as_ref(), env, &mut |env| {
                            n += self.eval(&e.formula, env)? as usize;
                            Ok(())
                        })?;
                    }
                }
                Ok(kind.holds(n, *k as usize))
            }
        }
    }

    fn each(
        &self,
        binders: &[Binder],
        guard: Option<&Guard>,
        env: &mut Env,
        f: &mut dyn FnMut(&mut Env) -> Result<(), LangError>,
    ) -> Result<(), LangError> {
        let Some((b, rest)) = binders.split_first() else {
            if guard.map(|g| eval_guard(g, env)).transpose()?.unwrap_or(true) {
                f(env)?;
            }
            return Ok(());
        };
        let d = domain_info(self.p, self.inst, &b.domain)?;
        for v in d.values {
            env.push(&b.var, v);
            self.each(rest, guard, env, f)?;
            env.pop();
        }
        Ok(())
    }

    fn atom(&self, at: &Atom, env: &Env) -> Result<bool, LangError> {
        let decl = self
            .p
            .pred(&at.pred)
            .ok_or_else(|| LangError::Ground(format!("undeclared predicate `{}`", at.pred)))?;
        let mut vals = Vec::new();
        for (t, dn) in at.args.iter().zip(&decl.arg_domains) {
            let d = domain_info(self.p, self.inst, dn)?;
            vals.push(eval_term(t, env, Some(&d))?);
        }
        let (key, want) = if decl.categorical {
            let lv = vals.pop().expect("label argument");
            let d = domain_info(self.p, self.inst, decl.arg_domains.last().unwrap())?;
            let l = d
                .index_of(lv)
                .ok_or_else(|| LangError::Ground(format!("label {lv} outside domain")))?;
            (vals, l)
        } else {
            (vals, 1)
        };
        let var = self
            .lookup
            .get(&(at.pred.as_str(), key.as_slice()))
            .ok_or_else(|| LangError::Ground(format!("atom `{}` has no decision variable", at.pred)))?;
        Ok(self.a[*var] == want)
    }
}
