//! Measurements shared by every experiment: constraint violation, task
//! metrics, per-example timing, low-data splits, and the report.

mod report;

pub use report::{fingerprint, make_report, method_id, write_report, Report, ReportRow, RunRecord, SummaryRow, TimingRow};

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::infer::{decode, IlpOptions, InferError, InferMethod, PredictionTable};
use crate::lang::{eval_ground, GroundProgram};
use crate::tasks::{Example, MetricKind, TaskError, TaskInstance};
use crate::train::{predict, Model, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("predictions cover {got} of {expected} variables")]
    Partial { expected: usize, got: usize },
    #[error("{pred} predictions for {gold} gold labels")]
    Length { pred: usize, gold: usize },
    #[error("label {label} out of range for variable {var}")]
    Label { var: usize, label: usize },
    #[error("no runs to report")]
    NoRuns,
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn sat_vector(pred: &[usize], g: &GroundProgram) -> Result<Vec<bool>, EvalError> {
    if pred.len() != g.vars.len() {
        return Err(EvalError::Partial {
            expected: g.vars.len(),
            got: pred.len(),
        });
    }
    if let Some((var, &label)) = pred.iter().enumerate().find(|(v, &l)| l >= g.vars[*v].n_labels()) {
        return Err(EvalError::Label { var, label });
    }
    Ok(eval_ground(g, pred).expect("assignment checked"))
}

/// (violated, total) ground constraints, skipping templates in `exclude`.
pub fn violation_counts(pred: &[usize], g: &GroundProgram, exclude: &[String]) -> Result<(usize, usize), EvalError> {
    let sat = sat_vector(pred, g)?;
    let mut bad = 0;
    let mut total = 0;
    for (s, c) in sat.iter().zip(&g.constraints) {
        if exclude.contains(&c.template) {
            continue;
        }
        total += 1;
        bad += !s as usize;
    }
    Ok((bad, total))
}

/// Fraction of ground constraints falsified by `pred`; 0 when there are
/// none.
pub fn violation_rate(pred: &[usize], g: &GroundProgram) -> Result<f64, EvalError> {
    let (bad, total) = violation_counts(pred, g, &[])?;
    Ok(ratio(bad, total))
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn same_len(pred: &[usize], gold: &[usize]) -> Result<(), EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::Length {
            pred: pred.len(),
            gold: gold.len(),
        });
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64, EvalError> {
    same_len(pred, gold)?;
    Ok(ratio(pred.iter().zip(gold).filter(|(p, g)| p == g).count(), gold.len()))
}

/// Mean per-class F1 over `classes`; a class with no true or predicted
/// items scores 0.
pub fn macro_f1(pred: &[usize], gold: &[usize], classes: &[usize]) -> Result<f64, EvalError> {
    same_len(pred, gold)?;
    if classes.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &c in classes {
        let tp = pred.iter().zip(gold).filter(|(&p, &g)| p == c && g == c).count();
        let fp = pred.iter().zip(gold).filter(|(&p, &g)| p == c && g != c).count();
        let fn_ = pred.iter().zip(gold).filter(|(&p, &g)| p != c && g == c).count();
        if tp + fp + fn_ == 0 {
            log::debug!("class {c} absent from predictions and gold; F1 counted as 0");
        }
        if tp > 0 {
            total += 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
        }
    }
    Ok(total / classes.len() as f64)
}

/// Metric `kind` of `pred` against `gold`; constraint satisfaction reads
/// only `violation`.
pub fn task_metric(kind: MetricKind, pred: &[usize], gold: &[usize], classes: &[usize], violation: f64) -> Result<f64, EvalError> {
    match kind {
        MetricKind::Accuracy => accuracy(pred, gold),
        MetricKind::MacroF1 => macro_f1(pred, gold, classes),
        MetricKind::ConstraintSatisfaction => Ok(1.0 - violation),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub phase: Phase,
    pub ms_per_example: f64,
    /// Wall time of each repetition.
    pub runs_ms: Vec<f64>,
}

pub const TIMING_REPEATS: usize = 3;

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn median_of(xs: &[f64]) -> f64 {
    median(&mut xs.to_vec())
}

/// Runs `f` [`TIMING_REPEATS`] times and reports the median wall time per
/// example along with the last result.
pub fn time_block<T>(phase: Phase, examples: usize, mut f: impl FnMut() -> T) -> (T, Timing) {
    let mut runs = Vec::with_capacity(TIMING_REPEATS);
    let mut last = None;
    for _ in 0..TIMING_REPEATS {
        let t0 = Instant::now();
        last = Some(f());
        runs.push(t0.elapsed().as_secs_f64() * 1e3);
    }
    let mean = runs.iter().sum::<f64>() / runs.len() as f64;
    let var = runs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / runs.len() as f64;
    log::debug!("{phase:?} timing over {examples} examples: {runs:?} ms, variance {var:.4}");
    let ms = median(&mut runs.clone());
    (
        last.expect("at least one repetition"),
        Timing {
            phase,
            ms_per_example: ratio_f(ms, examples),
            runs_ms: runs,
        },
    )
}

fn ratio_f(ms: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        ms / n as f64
    }
}

/// Indices (ascending) of a `fraction` subset, stratified by `strata`.
/// Each stratum keeps its share by largest remainder so the total is
/// `round(fraction · n)`, at least one.
pub fn split_low_data(strata: &[Option<usize>], fraction: f64, seed: u64) -> Result<Vec<usize>, EvalError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(EvalError::Task(TaskError::Invalid(format!(
            "data fraction {fraction} outside (0, 1]"
        ))));
    }
    let n = strata.len();
    if fraction == 1.0 || n == 0 {
        return Ok((0..n).collect());
    }
    let mut groups: BTreeMap<Option<usize>, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        groups.entry(*s).or_default().push(i);
    }
    let target = ((fraction * n as f64).round() as usize).max(1);
    let mut quota: Vec<(Option<usize>, usize, f64)> = groups
        .iter()
        .map(|(k, v)| {
            let q = fraction * v.len() as f64;
            (*k, q.floor() as usize, q - q.floor())
        })
        .collect();
    let mut left = target.saturating_sub(quota.iter().map(|q| q.1).sum());
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        if quota[i].1 < groups[&quota[i].0].len() {
            quota[i].1 += 1;
            left -= 1;
        }
    }
    let empty: Vec<_> = quota.iter().filter(|q| q.1 == 0).map(|q| q.0).collect();
    if !empty.is_empty() {
        log::warn!("low-data split of {fraction} leaves no examples for strata {empty:?}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(target);
    for (k, take, _) in quota {
        let mut members = groups[&k].clone();
        members.shuffle(&mut rng);
        out.extend_from_slice(&members[..take]);
    }
    out.sort_unstable();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub metric: f64,
    /// Over all ground constraints of the evaluated examples.
    pub violation_rate: f64,
    pub violated: usize,
    pub constraints: usize,
    pub infer_ms_per_example: f64,
    /// Examples whose solver did not prove optimality.
    pub not_optimal: usize,
}

/// Decodes each example with `method` and scores the result.
pub fn evaluate(
    task: &TaskInstance,
    model: &Model,
    examples: &[Example],
    method: InferMethod,
    opts: &IlpOptions,
) -> Result<Evaluation, EvalError> {
    let data = task.data(examples, false);
    let batches = (0..examples.len())
        .map(|i| data.build(&[i]))
        .collect::<Result<Vec<_>, _>>()?;
    let run = || -> Result<Vec<(Vec<usize>, bool)>, EvalError> {
        let mut out = Vec::with_capacity(batches.len());
        for b in &batches {
            let probs = PredictionTable::new(predict(model, b)?)?;
            let s = decode(method, &probs, &b.program, task.transitions.as_ref(), opts)?;
            out.push((s.assignment, s.stats.optimal));
        }
        Ok(out)
    };
    let (decoded, timing) = time_block(Phase::Infer, examples.len(), run);
    let decoded = decoded?;
    let n_readouts = task.readouts.len();
    let mut pred = vec![Vec::new(); n_readouts];
    let mut gold = vec![Vec::new(); n_readouts];
    let (mut violated, mut total, mut m_violated, mut m_total) = (0, 0, 0, 0);
    let mut not_optimal = 0;
    for ((ex, b), (a, optimal)) in examples.iter().zip(&batches).zip(&decoded) {
        let (v, t) = violation_counts(a, &b.program, &[])?;
        violated += v;
        total += t;
        let (v, t) = violation_counts(a, &b.program, &task.metric_excludes)?;
        m_violated += v;
        m_total += t;
        not_optimal += (method != InferMethod::None && !optimal) as usize;
        for (k, (p, g)) in task.read(ex, a).into_iter().enumerate() {
            pred[k].extend(p);
            gold[k].extend(g);
        }
    }
    let metric = match task.metric {
        MetricKind::ConstraintSatisfaction => 1.0 - ratio(m_violated, m_total),
        kind => {
            let mut s = 0.0;
            for (k, r) in task.readouts.iter().enumerate() {
                s += task_metric(kind, &pred[k], &gold[k], &r.classes(), 0.0)?;
            }
            s / n_readouts.max(1) as f64
        }
    };
    Ok(Evaluation {
        metric,
        violation_rate: ratio(violated, total),
        violated,
        constraints: total,
        infer_ms_per_example: timing.ms_per_example,
        not_optimal,
    })
}
