//! Recursive-descent parser for `.ncl` constraint programs.
//!
//! Connective precedence, tightest first: `!`, `&`, `|`, `->`, `<->`.
//! `->` and `<->` associate to the right. Quantifier bodies follow `:` and
//! extend as far right as possible.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::LangError;

const KEYWORDS: &[&str] = &[
    "domain",
    "pred",
    "free",
    "constraint",
    "weight",
    "categorical",
    "forall",
    "exists",
    "in",
    "where",
    "for",
    "exactly",
    "atmost",
    "atleast",
    "true",
    "false",
];

pub fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

/// Parses program text without declaration checks.
pub fn parse_syntax(src: &str) -> Result<ConstraintProgram, LangError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0 };
    p.program()
}

/// Parses a standalone formula (no trailing `;`).
pub fn parse_formula(src: &str) -> Result<Formula, LangError> {
    let toks = tokenize(src)?;
    let mut p = Parser { toks, pos: 0 };
    let f = p.formula()?;
    p.expect(Tok::Eof, "end of input")?;
    Ok(f)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, LangError>;

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, k: usize) -> &Tok {
        let i = (self.pos + k).min(self.toks.len() - 1);
        &self.toks[i].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn prev_span(&self) -> Span {
        self.toks[self.pos.saturating_sub(1)].span
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn err<T>(&self, message: String) -> PResult<T> {
        let s = self.span();
        Err(LangError::Syntax {
            line: s.line,
            col: s.col,
            message,
        })
    }

    fn unexpected<T>(&self, expected: &str) -> PResult<T> {
        self.err(format!(
            "unexpected {}, expected {expected}",
            self.peek().describe()
        ))
    }

    fn expect(&mut self, t: Tok, what: &str) -> PResult<Span> {
        if self.peek() == &t {
            Ok(self.bump().span)
        } else {
            self.unexpected(what)
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<Span> {
        if self.is_kw(kw) {
            Ok(self.bump().span)
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<(String, Span)> {
        match self.peek().clone() {
            Tok::Ident(s) if !is_keyword(&s) => {
                let sp = self.bump().span;
                Ok((s, sp))
            }
            _ => self.unexpected(what),
        }
    }

    fn program(&mut self) -> PResult<ConstraintProgram> {
        let mut prog = ConstraintProgram::default();
        loop {
            if self.eat(&Tok::Semi) {
                continue;
            }
            if self.peek() == &Tok::Eof {
                break;
            }
            if self.is_kw("domain") {
                let d = self.domain_decl()?;
                prog.domains.push(d);
            } else if self.is_kw("pred") {
                let d = self.pred_decl()?;
                prog.preds.push(d);
            } else if self.is_kw("free") {
                let d = self.free_decl()?;
                prog.free.push(d);
            } else if self.is_kw("constraint") {
                let start = self.bump().span;
                let (name, _) = self.ident("constraint name")?;
                let weight = if self.eat_kw("weight") {
                    Some(self.number()?)
                } else {
                    None
                };
                self.expect(Tok::Colon, "`:`")?;
                let formula = self.formula()?;
                let span = start.to(formula.span);
                self.end_statement()?;
                prog.constraints.push(Constraint {
                    name,
                    weight,
                    formula,
                    span,
                });
            } else {
                let formula = self.formula()?;
                let name = format!("c{}", prog.constraints.len());
                let span = formula.span;
                self.end_statement()?;
                prog.constraints.push(Constraint {
                    name,
                    weight: None,
                    formula,
                    span,
                });
            }
        }
        Ok(prog)
    }

    fn end_statement(&mut self) -> PResult<()> {
        if self.eat(&Tok::Semi) || self.peek() == &Tok::Eof {
            Ok(())
        } else {
            self.unexpected("`;`")
        }
    }

    fn number(&mut self) -> PResult<f64> {
        let neg = self.eat(&Tok::Minus);
        let v = match self.peek().clone() {
            Tok::Int(i) => i as f64,
            Tok::Float(x) => x,
            _ => return self.unexpected("a number"),
        };
        self.bump();
        Ok(if neg { -v } else { v })
    }

    fn signed_int(&mut self) -> PResult<i64> {
        let neg = self.eat(&Tok::Minus);
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(if neg { -i } else { i })
            }
            _ => self.unexpected("an integer"),
        }
    }

    fn domain_decl(&mut self) -> PResult<DomainDecl> {
        let start = self.bump().span;
        let (name, _) = self.ident("domain name")?;
        let kind = if self.eat(&Tok::Assign) {
            if self.eat(&Tok::LBrace) {
                let mut syms = Vec::new();
                if !self.eat(&Tok::RBrace) {
                    loop {
                        let (s, _) = self.ident("symbol")?;
                        syms.push(s);
                        if self.eat(&Tok::Comma) {
                            continue;
                        }
                        self.expect(Tok::RBrace, "`,` or `}`")?;
                        break;
                    }
                }
                DomainKind::Symbols(syms)
            } else {
                let lo = self.signed_int()?;
                self.expect(Tok::DotDot, "`..`")?;
                let hi = self.signed_int()?;
                DomainKind::Range { lo, hi }
            }
        } else {
            DomainKind::Open
        };
        let span = start.to(self.prev_span());
        self.end_statement()?;
        Ok(DomainDecl { name, kind, span })
    }

    fn pred_decl(&mut self) -> PResult<PredDecl> {
        let start = self.bump().span;
        let (name, _) = self.ident("predicate name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut arg_domains = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let (d, _) = self.ident("domain name")?;
                arg_domains.push(d);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                self.expect(Tok::RParen, "`,` or `)`")?;
                break;
            }
        }
        let categorical = self.eat_kw("categorical");
        if categorical && arg_domains.is_empty() {
            return self.err(format!(
                "categorical predicate `{name}` needs a label argument"
            ));
        }
        let span = start.to(self.prev_span());
        self.end_statement()?;
        Ok(PredDecl {
            name,
            arg_domains,
            categorical,
            span,
        })
    }

    fn free_decl(&mut self) -> PResult<FreeDecl> {
        let start = self.bump().span;
        let mut vars = vec![self.ident("variable name")?.0];
        while self.eat(&Tok::Comma) {
            vars.push(self.ident("variable name")?.0);
        }
        self.expect_kw("in")?;
        let (domain, _) = self.ident("domain name")?;
        let span = start.to(self.prev_span());
        self.end_statement()?;
        Ok(FreeDecl { vars, domain, span })
    }

    pub(crate) fn formula(&mut self) -> PResult<Formula> {
        self.iff()
    }

    fn iff(&mut self) -> PResult<Formula> {
        let lhs = self.implies()?;
        if self.eat(&Tok::DoubleArrow) {
            let rhs = self.iff()?;
            let span = lhs.span.to(rhs.span);
            return Ok(Formula::new(
                FormulaKind::Iff(Box::new(lhs), Box::new(rhs)),
                span,
            ));
        }
        Ok(lhs)
    }

    fn implies(&mut self) -> PResult<Formula> {
        let lhs = self.or()?;
        if self.eat(&Tok::Arrow) {
            let rhs = self.implies()?;
            let span = lhs.span.to(rhs.span);
            return Ok(Formula::new(
                FormulaKind::Implies(Box::new(lhs), Box::new(rhs)),
                span,
            ));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> PResult<Formula> {
        let first = self.and()?;
        if self.peek() != &Tok::Pipe {
            return Ok(first);
        }
        let mut xs = vec![first];
        while self.eat(&Tok::Pipe) {
            xs.push(self.and()?);
        }
        let span = xs[0].span.to(xs[xs.len() - 1].span);
        Ok(Formula::new(FormulaKind::Or(xs), span))
    }

    fn and(&mut self) -> PResult<Formula> {
        let first = self.unary()?;
        if self.peek() != &Tok::Amp {
            return Ok(first);
        }
        let mut xs = vec![first];
        while self.eat(&Tok::Amp) {
            xs.push(self.unary()?);
        }
        let span = xs[0].span.to(xs[xs.len() - 1].span);
        Ok(Formula::new(FormulaKind::And(xs), span))
    }

    fn unary(&mut self) -> PResult<Formula> {
        if self.peek() == &Tok::Bang {
            let start = self.bump().span;
            let inner = self.unary()?;
            let span = start.to(inner.span);
            return Ok(Formula::new(FormulaKind::Not(Box::new(inner)), span));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Formula> {
        let start = self.span();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                let mut f = self.formula()?;
                let end = self.expect(Tok::RParen, "`)`")?;
                f.span = start.to(end);
                Ok(f)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" => {
                    self.bump();
                    Ok(Formula::new(FormulaKind::Const(s == "true"), start))
                }
                "forall" | "exists" => self.quantified(),
                "exactly" | "atmost" | "atleast" => self.count(),
                _ if is_keyword(&s) => self.unexpected("a formula"),
                _ => {
                    if self.peek_at(1) != &Tok::LParen {
                        return self.err(format!(
                            "unexpected identifier `{s}`, expected a declaration, quantifier, or atom"
                        ));
                    }
                    self.atom()
                }
            },
            _ => self.unexpected("a formula"),
        }
    }

    fn atom(&mut self) -> PResult<Formula> {
        let (pred, start) = self.ident("predicate name")?;
        self.expect(Tok::LParen, "`(`")?;
        let mut args = Vec::new();
        let end;
        if self.peek() == &Tok::RParen {
            end = self.bump().span;
        } else {
            loop {
                args.push(self.term()?);
                if self.eat(&Tok::Comma) {
                    continue;
                }
                end = self.expect(Tok::RParen, "`,` or `)`")?;
                break;
            }
        }
        Ok(Formula::new(
            FormulaKind::Atom(Atom { pred, args }),
            start.to(end),
        ))
    }

    /// `x in D, y, z in E`
    fn binders(&mut self) -> PResult<Vec<Binder>> {
        let mut out = Vec::new();
        loop {
            let mut group = vec![self.ident("variable name")?];
            while self.eat(&Tok::Comma) {
                group.push(self.ident("variable name")?);
            }
            self.expect_kw("in")?;
            let (domain, dspan) = self.ident("domain name")?;
            for (var, vspan) in group {
                out.push(Binder {
                    var,
                    domain: domain.clone(),
                    span: vspan.to(dspan),
                });
            }
            if self.binder_follows() {
                self.bump();
                continue;
            }
            break;
        }
        Ok(out)
    }

    /// After a binder group: `,` starts another group iff it is followed by
    /// `ident in` or `ident ,`.
    fn binder_follows(&self) -> bool {
        if self.peek() != &Tok::Comma {
            return false;
        }
        matches!(self.peek_at(1), Tok::Ident(s) if !is_keyword(s))
            && (matches!(self.peek_at(2), Tok::Ident(s) if s == "in")
                || self.peek_at(2) == &Tok::Comma)
    }

    fn quantified(&mut self) -> PResult<Formula> {
        let start = self.span();
        let q = if self.eat_kw("forall") {
            Quantifier::Forall
        } else {
            self.expect_kw("exists")?;
            Quantifier::Exists
        };
        let binders = self.binders()?;
        let guard = if self.eat_kw("where") {
            Some(self.guard()?)
        } else {
            None
        };
        self.expect(Tok::Colon, "`:`")?;
        let body = self.formula()?;
        let span = start.to(body.span);
        Ok(Formula::new(
            FormulaKind::Quant {
                q,
                binders,
                guard,
                body: Box::new(body),
            },
            span,
        ))
    }

    fn count(&mut self) -> PResult<Formula> {
        let start = self.span();
        let kind = match self.bump().tok {
            Tok::Ident(s) if s == "exactly" => CountKind::Exactly,
            Tok::Ident(s) if s == "atmost" => CountKind::AtMost,
            _ => CountKind::AtLeast,
        };
        self.expect(Tok::LParen, "`(`")?;
        let k = match self.peek().clone() {
            Tok::Int(i) if i >= 0 => {
                self.bump();
                i as u64
            }
            _ => return self.unexpected("a non-negative integer"),
        };
        self.expect(Tok::RParen, "`)`")?;
        self.expect(Tok::LBrace, "`{`")?;
        let mut elems = Vec::new();
        let end;
        if self.peek() == &Tok::RBrace {
            end = self.bump().span;
        } else {
            loop {
                let formula = self.formula()?;
                let (binders, guard) = if self.eat_kw("for") {
                    let b = self.binders()?;
                    let g = if self.eat_kw("where") {
                        Some(self.guard()?)
                    } else {
                        None
                    };
                    (b, g)
                } else {
                    (Vec::new(), None)
                };
                elems.push(CountElem {
                    formula,
                    binders,
                    guard,
                });
                if self.eat(&Tok::Comma) {
                    continue;
                }
                end = self.expect(Tok::RBrace, "`,` or `}`")?;
                break;
            }
        }
        Ok(Formula::new(
            FormulaKind::Count { kind, k, elems },
            start.to(end),
        ))
    }

    fn guard(&mut self) -> PResult<Guard> {
        let mut lhs = self.guard_and()?;
        while self.eat(&Tok::Pipe) {
            let rhs = self.guard_and()?;
            let span = lhs.span.to(rhs.span);
            lhs = Guard {
                kind: GuardKind::Or(Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn guard_and(&mut self) -> PResult<Guard> {
        let mut lhs = self.guard_not()?;
        while self.eat(&Tok::Amp) {
            let rhs = self.guard_not()?;
            let span = lhs.span.to(rhs.span);
            lhs = Guard {
                kind: GuardKind::And(Box::new(lhs), Box::new(rhs)),
                span,
            };
        }
        Ok(lhs)
    }

    fn guard_not(&mut self) -> PResult<Guard> {
        if self.peek() == &Tok::Bang {
            let start = self.bump().span;
            let g = self.guard_not()?;
            let span = start.to(g.span);
            return Ok(Guard {
                kind: GuardKind::Not(Box::new(g)),
                span,
            });
        }
        self.guard_primary()
    }

    fn guard_primary(&mut self) -> PResult<Guard> {
        let start = self.span();
        if self.is_kw("true") || self.is_kw("false") {
            let v = self.is_kw("true");
            self.bump();
            return Ok(Guard {
                kind: GuardKind::Const(v),
                span: start,
            });
        }
        if self.peek() == &Tok::LParen {
            // `(guard)` or a parenthesised term starting a comparison
            let save = self.pos;
            self.bump();
            if let Ok(mut g) = self.guard() {
                if self.peek() == &Tok::RParen {
                    let end = self.bump().span;
                    if !is_term_continuation(self.peek()) {
                        g.span = start.to(end);
                        return Ok(g);
                    }
                }
            }
            self.pos = save;
        }
        let lhs = self.term()?;
        let op = match self.peek() {
            Tok::EqEq => CmpOp::Eq,
            Tok::Ne => CmpOp::Ne,
            Tok::Lt => CmpOp::Lt,
            Tok::Le => CmpOp::Le,
            Tok::Gt => CmpOp::Gt,
            Tok::Ge => CmpOp::Ge,
            _ => return self.unexpected("a comparison operator"),
        };
        self.bump();
        let rhs = self.term()?;
        let span = lhs.span.to(rhs.span);
        Ok(Guard {
            kind: GuardKind::Cmp { op, lhs, rhs },
            span,
        })
    }

    fn term(&mut self) -> PResult<Term> {
        let mut lhs = self.term_mul()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => ArithOp::Add,
                Tok::Minus => ArithOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.term_mul()?;
            let span = lhs.span.to(rhs.span);
            lhs = Term {
                kind: TermKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            };
        }
        Ok(lhs)
    }

    fn term_mul(&mut self) -> PResult<Term> {
        let mut lhs = self.term_unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => ArithOp::Mul,
                Tok::Slash => ArithOp::Div,
                Tok::Percent => ArithOp::Rem,
                _ => break,
            };
            self.bump();
            let rhs = self.term_unary()?;
            let span = lhs.span.to(rhs.span);
            lhs = Term {
                kind: TermKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
                span,
            };
        }
        Ok(lhs)
    }

    fn term_unary(&mut self) -> PResult<Term> {
        if self.peek() == &Tok::Minus {
            let start = self.bump().span;
            let t = self.term_unary()?;
            let span = start.to(t.span);
            return Ok(Term {
                kind: TermKind::Neg(Box::new(t)),
                span,
            });
        }
        let start = self.span();
        match self.peek().clone() {
            Tok::Int(i) => {
                self.bump();
                Ok(Term {
                    kind: TermKind::Int(i),
                    span: start,
                })
            }
            Tok::Ident(s) if !is_keyword(&s) => {
                self.bump();
                Ok(Term {
                    kind: TermKind::Name(s),
                    span: start,
                })
            }
            Tok::LParen => {
                self.bump();
                let mut t = self.term()?;
                let end = self.expect(Tok::RParen, "`)`")?;
                t.span = start.to(end);
                Ok(t)
            }
            _ => self.unexpected("a term"),
        }
    }
}

fn is_term_continuation(t: &Tok) -> bool {
    matches!(
        t,
        Tok::Plus
            | Tok::Minus
            | Tok::Star
            | Tok::Slash
            | Tok::Percent
            | Tok::EqEq
            | Tok::Ne
            | Tok::Lt
            | Tok::Le
            | Tok::Gt
            | Tok::Ge
    )
}
