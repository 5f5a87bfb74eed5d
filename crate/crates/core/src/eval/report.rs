//! Experiment report: one row per run, a per-cell summary over seeds, and
//! Δ against the matching unconstrained baseline.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{median_of, EvalError};

/// Outcome of one (task, method, variant, fraction, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub task: String,
    pub train_method: String,
    pub infer_method: String,
    pub metric: String,
    pub value: f64,
    pub violation_rate: f64,
    pub train_ms_per_example: f64,
    pub infer_ms_per_example: f64,
    pub data_fraction: f64,
    pub variant: String,
    pub seed: u64,
    pub fingerprint: String,
}

impl RunRecord {
    /// "none", "pd", "ilp", "pd+ilp", ...
    pub fn method_id(&self) -> String {
        method_id(&self.train_method, &self.infer_method)
    }

    pub fn is_baseline(&self) -> bool {
        self.train_method == "none" && self.infer_method == "none"
    }

    fn cell(&self) -> CellKey {
        CellKey {
            task: self.task.clone(),
            variant: self.variant.clone(),
            fraction: self.data_fraction.to_bits(),
        }
    }
}

pub fn method_id(train: &str, infer: &str) -> String {
    match (train, infer) {
        ("none", "none") => "none".into(),
        ("none", i) => i.into(),
        (t, "none") => t.into(),
        (t, i) => format!("{t}+{i}"),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CellKey {
    task: String,
    variant: String,
    fraction: u64,
}

/// Row of the report; timings are kept out so the JSON is reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub method: String,
    pub train_method: String,
    pub infer_method: String,
    pub metric: String,
    pub value: f64,
    /// `None` when no baseline run shares task, variant, fraction and seed.
    pub delta: Option<f64>,
    pub violation_rate: f64,
    pub data_fraction: f64,
    pub variant: String,
    pub seed: u64,
    pub fingerprint: String,
    pub headline: bool,
}

/// Median over seeds of one (task, variant, fraction, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub task: String,
    pub method: String,
    pub metric: String,
    pub variant: String,
    pub data_fraction: f64,
    pub seeds: usize,
    pub value: f64,
    pub delta: Option<f64>,
    pub violation_rate: f64,
    pub train_ms_per_example: f64,
    pub infer_ms_per_example: f64,
    pub headline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub task: String,
    pub method: String,
    pub variant: String,
    pub data_fraction: f64,
    pub seed: u64,
    pub train_ms_per_example: f64,
    pub infer_ms_per_example: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub summary: Vec<SummaryRow>,
    pub timings: Vec<TimingRow>,
}

#[derive(Serialize)]
struct ReportJson<'a> {
    runs: &'a [ReportRow],
    summary: Vec<SummaryJson<'a>>,
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    task: &'a str,
    method: &'a str,
    metric: &'a str,
    variant: &'a str,
    data_fraction: f64,
    seeds: usize,
    value: f64,
    delta: Option<f64>,
    violation_rate: f64,
    headline: bool,
}

fn is_headline(variant: &str, fraction: f64) -> bool {
    variant == "strong" && fraction == 1.0
}

fn sort_key(r: &RunRecord) -> (CellKey, String, u64) {
    (r.cell(), r.method_id(), r.seed)
}

pub fn make_report(runs: &[RunRecord]) -> Result<Report, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let mut runs = runs.to_vec();
    runs.sort_by(|a, b| {
        sort_key(a)
            .cmp(&sort_key(b))
            .then(a.fingerprint.cmp(&b.fingerprint))
    });
    let baseline: BTreeMap<(CellKey, u64), f64> = runs
        .iter()
        .filter(|r| r.is_baseline())
        .map(|r| ((r.cell(), r.seed), r.value))
        .collect();
    let rows: Vec<ReportRow> = runs
        .iter()
        .map(|r| ReportRow {
            task: r.task.clone(),
            method: r.method_id(),
            train_method: r.train_method.clone(),
            infer_method: r.infer_method.clone(),
            metric: r.metric.clone(),
            value: r.value,
            delta: baseline.get(&(r.cell(), r.seed)).map(|b| r.value - b),
            violation_rate: r.violation_rate,
            data_fraction: r.data_fraction,
            variant: r.variant.clone(),
            seed: r.seed,
            fingerprint: r.fingerprint.clone(),
            headline: is_headline(&r.variant, r.data_fraction),
        })
        .collect();
    let timings = runs
        .iter()
        .map(|r| TimingRow {
            task: r.task.clone(),
            method: r.method_id(),
            variant: r.variant.clone(),
            data_fraction: r.data_fraction,
            seed: r.seed,
            train_ms_per_example: r.train_ms_per_example,
            infer_ms_per_example: r.infer_ms_per_example,
        })
        .collect();

    let mut groups: BTreeMap<(CellKey, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.cell(), r.method_id())).or_default().push(r);
    }
    let mut summary = Vec::with_capacity(groups.len());
    for ((cell, method), rs) in &groups {
        let med = |f: fn(&RunRecord) -> f64| median_of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
        let value = med(|r| r.value);
        let base = groups
            .get(&(cell.clone(), "none".to_string()))
            .map(|b| median_of(&b.iter().map(|r| r.value).collect::<Vec<_>>()));
        let first = rs[0];
        summary.push(SummaryRow {
            task: cell.task.clone(),
            method: method.clone(),
            metric: first.metric.clone(),
            variant: cell.variant.clone(),
            data_fraction: first.data_fraction,
            seeds: rs.len(),
            value,
            delta: base.map(|b| value - b),
            violation_rate: med(|r| r.violation_rate),
            train_ms_per_example: med(|r| r.train_ms_per_example),
            infer_ms_per_example: med(|r| r.infer_ms_per_example),
            headline: is_headline(&cell.variant, first.data_fraction),
        });
    }
    Ok(Report { rows, summary, timings })
}

impl Report {
    /// Reproducible JSON: runs and the seed-median summary, no timings.
    pub fn to_json(&self) -> String {
        let summary = self
            .summary
            .iter()
            .map(|s| SummaryJson {
                task: &s.task,
                method: &s.method,
                metric: &s.metric,
                variant: &s.variant,
                data_fraction: s.data_fraction,
                seeds: s.seeds,
                value: s.value,
                delta: s.delta,
                violation_rate: s.violation_rate,
                headline: s.headline,
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&ReportJson {
            runs: &self.rows,
            summary,
        })
        .expect("report serializes");
        s.push('\n');
        s
    }

    pub fn timings_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.timings).expect("timings serialize");
        s.push('\n');
        s
    }

    /// Aligned text table of the summary; `*` marks the strong, full-data
    /// cell.
    pub fn to_text(&self) -> String {
        let header = [
            "task", "variant", "data", "method", "metric", "value", "delta", "violation", "train ms/ex", "infer ms/ex", "seeds",
        ];
        let mut table: Vec<Vec<String>> = vec![header.iter().map(|h| h.to_string()).collect()];
        for s in &self.summary {
            let delta = match s.delta {
                Some(d) if d > 0.0 => format!("↑{:.2}", 100.0 * d),
                Some(d) if d < 0.0 => format!("↓{:.2}", -100.0 * d),
                Some(_) => "0.00".into(),
                None => "n/a".into(),
            };
            table.push(vec![
                format!("{}{}", s.task, if s.headline { "*" } else { "" }),
                s.variant.clone(),
                format!("{:.0}%", 100.0 * s.data_fraction),
                s.method.clone(),
                s.metric.clone(),
                format!("{:.2}", 100.0 * s.value),
                delta,
                format!("{:.2}%", 100.0 * s.violation_rate),
                format!("{:.3}", s.train_ms_per_example),
                format!("{:.3}", s.infer_ms_per_example),
                s.seeds.to_string(),
            ]);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|c| table.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &table {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, w)| format!("{cell}{}", " ".repeat(w - cell.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}

/// Writes `report.json`, `report.txt` and `timings.json` into `dir`.
pub fn write_report(report: &Report, dir: &Path) -> Result<(), EvalError> {
    let io = |path: &Path, e: std::io::Error| EvalError::Io {
        path: path.display().to_string(),
        source: e,
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    for (name, body) in [
        ("report.json", report.to_json()),
        ("report.txt", report.to_text()),
        ("timings.json", report.timings_json()),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, body).map_err(|e| io(&p, e))?;
    }
    Ok(())
}

/// SHA-256 over the serialized training config and the program text.
pub fn fingerprint(train_config_json: &str, program_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(train_config_json.as_bytes());
    h.update([0u8]);
    h.update(program_text.as_bytes());
    hex::encode(h.finalize())
}
