//! LP-format text for a [`LinearSystem`]. Column mapping and auxiliary
//! definitions travel in `\` comment lines so the file reads back losslessly.

use std::fmt::Write as _;

use super::linear::{Cmp, LinearSystem, LpVar, LpVarKind, Row};
use super::CompileError;
use crate::lang::GroundFormula;

const TERMS_PER_LINE: usize = 8;

fn write_terms(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    if terms.is_empty() {
        let _ = write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("x"));
        return;
    }
    for (i, &(j, c)) in terms.iter().enumerate() {
        if i > 0 && i % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        if c < 0.0 {
            out.push_str(" -");
        } else if i > 0 {
            out.push_str(" +");
        }
        let a = c.abs();
        if a == 1.0 {
            let _ = write!(out, " {}", names[j]);
        } else {
            let _ = write!(out, " {a} {}", names[j]);
        }
    }
}

pub fn write_lp(ls: &LinearSystem) -> String {
    let names: Vec<String> = ls.vars.iter().map(|v| v.name.clone()).collect();
    let mut s = String::new();
    s.push_str("\\ ncl linear system\n");
    for v in &ls.vars {
        match &v.kind {
            LpVarKind::Indicator { var, label } => {
                let _ = writeln!(
                    s,
                    "\\ ind {} {var} {label} {} {}",
                    v.name, ls.decision_names[*var], ls.label_names[*var][*label]
                );
            }
            LpVarKind::Aux { def } => {
                let _ = writeln!(
                    s,
                    "\\ aux {} {}",
                    v.name,
                    serde_json::to_string(def).expect("formula serializes")
                );
            }
        }
    }
    s.push_str("Maximize\n obj:");
    let obj: Vec<(usize, f64)> = ls
        .objective
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| (j, *c))
        .collect();
    write_terms(&mut s, &obj, &names);
    s.push_str("\nSubject To\n");
    for (i, r) in ls.rows.iter().enumerate() {
        let _ = writeln!(s, "\\ row r{i} {}", r.origin);
        let _ = write!(s, " r{i}:");
        write_terms(&mut s, &r.terms, &names);
        let _ = writeln!(s, " {} {}", r.cmp.symbol(), r.rhs);
    }
    s.push_str("Binary\n");
    for chunk in names.chunks(TERMS_PER_LINE) {
        let _ = writeln!(s, " {}", chunk.join(" "));
    }
    s.push_str("End\n");
    s
}

fn perr(line: usize, message: impl Into<String>) -> CompileError {
    CompileError::LpParse {
        line,
        message: message.into(),
    }
}

/// Parses `c1 x1 + c2 x2 - x3 ...` into column terms.
fn parse_terms(
    text: &str,
    line: usize,
    col_of: &std::collections::HashMap<String, usize>,
) -> Result<Vec<(usize, f64)>, CompileError> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    for tok in text.split_whitespace() {
        match tok {
            "+" => sign = 1.0,
            "-" => sign = -1.0,
            _ => {
                if let Ok(c) = tok.parse::<f64>() {
                    coef = Some(c);
                    continue;
                }
                let j = *col_of
                    .get(tok)
                    .ok_or_else(|| perr(line, format!("unknown column `{tok}`")))?;
                let c = sign * coef.unwrap_or(1.0);
                if c != 0.0 {
                    match out.iter_mut().find(|(k, _)| *k == j) {
                        Some(t) => t.1 += c,
                        None => out.push((j, c)),
                    }
                }
                sign = 1.0;
                coef = None;
            }
        }
    }
    out.retain(|t| t.1 != 0.0);
    out.sort_by_key(|t| t.0);
    Ok(out)
}

pub fn read_lp(text: &str) -> Result<LinearSystem, CompileError> {
    #[derive(PartialEq)]
    enum Section {
        Header,
        Objective,
        Rows,
        Binary,
        End,
    }
    let mut vars: Vec<LpVar> = Vec::new();
    let mut decision_names: Vec<String> = Vec::new();
    let mut label_names: Vec<Vec<String>> = Vec::new();
    let mut col_of = std::collections::HashMap::new();
    let mut origins: std::collections::HashMap<String, String> = std::collections::HashMap::new();
    let mut section = Section::Header;
    // (first line number, accumulated text) of each statement
    let mut objective_text = String::new();
    let mut objective_line = 0;
    let mut row_texts: Vec<(usize, String)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let line = raw.trim();
        if let Some(comment) = line.strip_prefix('\\') {
            let parts: Vec<&str> = comment.split_whitespace().collect();
            match parts.first().copied() {
                Some("ind") if parts.len() >= 6 => {
                    let name = parts[1].to_string();
                    let var: usize = parts[2].parse().map_err(|_| perr(ln, "bad variable index"))?;
                    let label: usize = parts[3].parse().map_err(|_| perr(ln, "bad label index"))?;
                    if var >= decision_names.len() {
                        decision_names.resize(var + 1, String::new());
                        label_names.resize(var + 1, Vec::new());
                    }
                    decision_names[var] = parts[4].to_string();
                    if label >= label_names[var].len() {
                        label_names[var].resize(label + 1, String::new());
                    }
                    label_names[var][label] = parts[5..].join(" ");
                    col_of.insert(name.clone(), vars.len());
                    vars.push(LpVar {
                        name,
                        kind: LpVarKind::Indicator { var, label },
                    });
                }
                Some("aux") if parts.len() >= 3 => {
                    let name = parts[1].to_string();
                    let json = comment.trim_start().splitn(3, char::is_whitespace).nth(2).unwrap_or("").trim();
                    let def: GroundFormula = serde_json::from_str(json)
                        .map_err(|e| perr(ln, format!("bad auxiliary definition: {e}")))?;
                    col_of.insert(name.clone(), vars.len());
                    vars.push(LpVar {
                        name,
                        kind: LpVarKind::Aux { def },
                    });
                }
                Some("row") if parts.len() >= 2 => {
                    let rest = comment.trim_start().splitn(3, ' ').nth(2).unwrap_or("").to_string();
                    origins.insert(parts[1].to_string(), rest);
                }
                _ => {}
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        match line.to_ascii_lowercase().as_str() {
            "maximize" | "maximise" | "max" => {
                section = Section::Objective;
                continue;
            }
            "subject to" | "such that" | "st" | "s.t." => {
                section = Section::Rows;
                continue;
            }
            "binary" | "binaries" | "bin" => {
                section = Section::Binary;
                continue;
            }
            "end" => {
                section = Section::End;
                continue;
            }
            "minimize" | "minimise" | "min" => {
                return Err(perr(ln, "only maximization objectives are supported"));
            }
            _ => {}
        }
        match section {
            Section::Header => return Err(perr(ln, format!("unexpected `{line}` before objective"))),
            Section::Objective => {
                if objective_text.is_empty() {
                    objective_line = ln;
                }
                let body = line.split_once(':').map(|(_, b)| b).unwrap_or(line);
                objective_text.push(' ');
                objective_text.push_str(body);
            }
            Section::Rows => {
                let starts_row = line
                    .split_once(':')
                    .map(|(n, _)| !n.trim().is_empty() && !n.contains(char::is_whitespace))
                    .unwrap_or(false);
                if starts_row || row_texts.is_empty() {
                    row_texts.push((ln, line.to_string()));
                } else {
                    let last = row_texts.last_mut().unwrap();
                    last.1.push(' ');
                    last.1.push_str(line);
                }
            }
            Section::Binary => {
                for name in line.split_whitespace() {
                    if !col_of.contains_key(name) {
                        return Err(perr(ln, format!("binary column `{name}` has no mapping comment")));
                    }
                }
            }
            Section::End => return Err(perr(ln, "content after End")),
        }
    }
    if section != Section::End {
        return Err(perr(text.lines().count(), "missing End"));
    }
    let mut objective = vec![0.0; vars.len()];
    for (j, c) in parse_terms(&objective_text, objective_line, &col_of)? {
        objective[j] = c;
    }
    let mut rows = Vec::new();
    for (ln, t) in row_texts {
        let (name, body) = t.split_once(':').ok_or_else(|| perr(ln, "row without name"))?;
        let (cmp, pos, width) = ["<=", ">=", "=<", "=>", "="]
            .iter()
            .find_map(|op| body.find(op).map(|p| (*op, p, op.len())))
            .map(|(op, p, w)| {
                let c = match op {
                    "<=" | "=<" => Cmp::Le,
                    ">=" | "=>" => Cmp::Ge,
                    _ => Cmp::Eq,
                };
                (c, p, w)
            })
            .ok_or_else(|| perr(ln, "row without comparator"))?;
        let terms = parse_terms(&body[..pos], ln, &col_of)?;
        let rhs: f64 = body[pos + width..]
            .trim()
            .parse()
            .map_err(|_| perr(ln, "bad right-hand side"))?;
        let name = name.trim().to_string();
        rows.push(Row {
            terms,
            cmp,
            rhs,
            origin: origins.remove(&name).unwrap_or(name),
        });
    }
    let mut indicators: Vec<Vec<usize>> = label_names.iter().map(|l| vec![usize::MAX; l.len()]).collect();
    for (j, v) in vars.iter().enumerate() {
        if let LpVarKind::Indicator { var, label } = v.kind {
            indicators[var][label] = j;
        }
    }
    if indicators.iter().flatten().any(|&j| j == usize::MAX) {
        return Err(perr(0, "indicator mapping has gaps"));
    }
    Ok(LinearSystem {
        vars,
        rows,
        objective,
        indicators,
        decision_names,
        label_names,
    })
}
