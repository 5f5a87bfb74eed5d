use std::collections::HashMap;
use std::sync::OnceLock;

use super::InferError;
use crate::compile::LinearSystem;

/// Probabilities below this are raised to it before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-variable categorical distributions.
#[derive(Debug, Clone)]
pub struct PredictionTable {
    probs: Vec<Vec<f64>>,
    log: OnceLock<Vec<Vec<f64>>>,
}

impl PartialEq for PredictionTable {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

impl PredictionTable {
    /// Rows must sum to 1 within 1e-9; entries are clamped to
    /// `[PROB_FLOOR, 1]`.
    pub fn new(probs: Vec<Vec<f64>>) -> Result<PredictionTable, InferError> {
        for (v, row) in probs.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if row.is_empty() || (s - 1.0).abs() > 1e-9 || row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(InferError::Mismatch(format!(
                    "row {v} is not a distribution (sum {s})"
                )));
            }
        }
        let probs = probs
            .into_iter()
            .map(|r| r.into_iter().map(|p| p.clamp(PROB_FLOOR, 1.0)).collect())
            .collect();
        Ok(PredictionTable {
            probs,
            log: OnceLock::new(),
        })
    }

    /// Row-wise softmax of `logits`.
    pub fn from_logits(logits: &[Vec<f64>]) -> PredictionTable {
        let probs = logits
            .iter()
            .map(|row| {
                let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| (x / s).clamp(PROB_FLOOR, 1.0)).collect()
            })
            .collect();
        PredictionTable {
            probs,
            log: OnceLock::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn n_labels(&self, v: usize) -> usize {
        self.probs[v].len()
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[Vec<f64>] {
        self.log
            .get_or_init(|| self.probs.iter().map(|r| r.iter().map(|p| p.ln()).collect()).collect())
    }

    /// Σ log p(v, a[v]) summed in variable order.
    pub fn score(&self, a: &[usize]) -> f64 {
        let lp = self.log_probs();
        a.iter().enumerate().map(|(v, &l)| lp[v][l]).sum()
    }

    /// Per-variable most probable label, lowest index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        self.probs.iter().map(|r| crate::autodiff::argmax(r)).collect()
    }
}

/// Reads `variable,label,prob` rows against the names of `ls`. Missing
/// entries are an error.
pub fn read_probs_csv(text: &str, ls: &LinearSystem) -> Result<PredictionTable, InferError> {
    let var_of: HashMap<&str, usize> = ls
        .decision_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut probs: Vec<Vec<Option<f64>>> = ls.label_names.iter().map(|l| vec![None; l.len()]).collect();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let ln = i + 1;
        if line.is_empty() || (ln == 1 && line.starts_with("variable")) {
            continue;
        }
        // variable names may contain commas, so split from the right
        let mut parts = line.rsplitn(3, ',');
        let (Some(p), Some(label), Some(var)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(InferError::Csv {
                line: ln,
                message: "expected variable,label,prob".into(),
            });
        };
        let var = var.trim().trim_matches('"');
        let v = *var_of.get(var).ok_or_else(|| InferError::Csv {
            line: ln,
            message: format!("unknown variable `{var}`"),
        })?;
        let label = label.trim();
        let l = ls.label_names[v]
            .iter()
            .position(|n| n == label)
            .or_else(|| label.parse::<usize>().ok().filter(|&l| l < ls.label_names[v].len()))
            .ok_or_else(|| InferError::Csv {
                line: ln,
                message: format!("unknown label `{label}` for `{var}`"),
            })?;
        let p: f64 = p.trim().parse().map_err(|_| InferError::Csv {
            line: ln,
            message: format!("bad probability `{}`", p.trim()),
        })?;
        probs[v][l] = Some(p);
    }
    let mut rows = Vec::with_capacity(probs.len());
    for (v, row) in probs.into_iter().enumerate() {
        let r: Option<Vec<f64>> = row.into_iter().collect();
        rows.push(r.ok_or_else(|| InferError::Csv {
            line: 0,
            message: format!("missing probabilities for `{}`", ls.decision_names[v]),
        })?);
    }
    PredictionTable::new(rows)
}
