//! Synthetic benchmark tasks: data generators, loaders, constraint
//! programs, and model specifications.

mod belief;
mod bio;
mod digits;
mod er;
mod hierarchy;
mod idx;
mod nli;
mod sudoku;

pub use belief::gen_implication_graph;
pub use bio::{bio_transitions, gen_bio, load_conll, parse_conll, BioSentence};
pub use digits::{gen_digit_exclusive, gen_digit_exclusive_with, gen_digit_sum, glyph, load_mnist_idx, sum_distribution, DIGIT_NOISE};
pub use er::{gen_entity_relation, ENTITY_TYPES, RELATION_TYPES, RELATION_TYPING};
pub use hierarchy::{gen_hierarchy, parent_of, N_CHILDREN, N_PARENTS};
pub use idx::{read_idx_images, read_idx_labels, IdxImages};
pub use nli::{gen_consistency_pairs, NLI_LABELS};
pub use sudoku::{gen_sudoku, sudoku_program_text, valid_grid, SudokuPuzzle};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::Tensor;
use crate::infer::Transitions;
use crate::lang::{eval_ground, ground_program, BindingValue, ConstraintProgram, GroundProgram, Instance, LangError};
use crate::lang::ground::VarKey;
use crate::train::{ground_batch, Batch, BatchSource, HeadSpec, TrainError};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}:{line}: {message}")]
    Line { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Lang(#[from] LangError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Accuracy,
    MacroF1,
    ConstraintSatisfaction,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "accuracy",
            MetricKind::MacroF1 => "macro-f1",
            MetricKind::ConstraintSatisfaction => "constraint-satisfaction",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Simple,
    #[default]
    Strong,
}

/// Turns an assignment into per-item class labels for metrics.
#[derive(Debug, Clone, PartialEq)]
pub enum Readout {
    /// The label of each variable of `pred`.
    Labels { pred: String, classes: Vec<usize> },
    /// Boolean indicators `pred(row, class)`; a row reads as its single
    /// true class and as `classes.len()` otherwise.
    OneHot { pred: String, n_classes: usize },
}

impl Readout {
    /// Classes averaged by macro-F1.
    pub fn classes(&self) -> Vec<usize> {
        match self {
            Readout::Labels { classes, .. } => classes.clone(),
            Readout::OneHot { n_classes, .. } => (0..*n_classes).collect(),
        }
    }
}

/// One decision variable of an example. For input-driven heads `args[0]`
/// is the example-local row of the head's input and `col` the first logit
/// column in that row; for free logits heads `col` is absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarSpec {
    pub pred: String,
    pub args: Vec<i64>,
    pub head: usize,
    pub col: usize,
    pub label: Option<usize>,
    /// Whether `label` feeds the cross-entropy term.
    pub supervised: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingRow {
    pub constraint: String,
    pub values: BTreeMap<String, BindingValue>,
}

impl BindingRow {
    pub fn new<'a>(constraint: &str, values: impl IntoIterator<Item = (&'a str, BindingValue)>) -> BindingRow {
        BindingRow {
            constraint: constraint.into(),
            values: values.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    /// Feature rows per input kind.
    pub inputs: Vec<Vec<Vec<f64>>>,
    pub vars: Vec<VarSpec>,
    pub bindings: Vec<BindingRow>,
    /// Class used to stratify low-data splits.
    pub stratum: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSpec {
    /// Open domain of the input's rows.
    pub domain: String,
    pub width: usize,
}

#[derive(Debug, Clone)]
pub struct TaskInstance {
    pub name: String,
    pub program_text: String,
    pub program: ConstraintProgram,
    pub train: Vec<Example>,
    pub dev: Vec<Example>,
    pub test: Vec<Example>,
    pub inputs: Vec<InputSpec>,
    /// Binding names holding example-local rows, with their input kind.
    pub row_bindings: BTreeMap<String, usize>,
    pub simple: Vec<HeadSpec>,
    pub strong: Vec<HeadSpec>,
    pub metric: MetricKind,
    pub readouts: Vec<Readout>,
    /// Label mask when the variables of each example form one sequence.
    pub transitions: Option<Transitions>,
    /// Templates left out of the constraint-satisfaction metric.
    pub metric_excludes: Vec<String>,
}

fn head_input(h: &HeadSpec) -> Option<usize> {
    match h {
        HeadSpec::Mlp { input, .. } => Some(*input),
        HeadSpec::Logits { .. } => None,
    }
}

fn head_width(h: &HeadSpec) -> usize {
    match h {
        HeadSpec::Mlp { widths, .. } => *widths.last().unwrap_or(&0),
        HeadSpec::Logits { n, .. } => *n,
    }
}

pub fn param_count(spec: &[HeadSpec]) -> usize {
    spec.iter()
        .map(|h| match h {
            HeadSpec::Mlp { widths, .. } => widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum(),
            HeadSpec::Logits { n, .. } => *n,
        })
        .sum()
}

impl TaskInstance {
    pub fn model_spec(&self, v: Variant) -> &[HeadSpec] {
        match v {
            Variant::Simple => &self.simple,
            Variant::Strong => &self.strong,
        }
    }

    /// Grounding instance for a sequence of examples stacked row-wise.
    /// Returns it with each example's row offset per input kind.
    pub fn instance(&self, examples: &[&Example]) -> (Instance, Vec<Vec<usize>>) {
        let mut inst = Instance::default();
        let mut totals = vec![0usize; self.inputs.len()];
        let mut offsets = Vec::with_capacity(examples.len());
        for ex in examples {
            offsets.push(totals.clone());
            for (k, rows) in ex.inputs.iter().enumerate() {
                totals[k] += rows.len();
            }
        }
        for (k, spec) in self.inputs.iter().enumerate() {
            inst.domain_sizes.insert(spec.domain.clone(), totals[k]);
        }
        for (ex, off) in examples.iter().zip(&offsets) {
            for v in &ex.vars {
                let mut args = v.args.clone();
                if let Some(k) = head_input(&self.strong[v.head]) {
                    args[0] += off[k] as i64;
                }
                inst.variables.push(VarKey {
                    pred: v.pred.clone(),
                    args,
                });
            }
            for b in &ex.bindings {
                let row = b.values.iter().map(|(name, val)| {
                    let val = match (self.row_bindings.get(name), val) {
                        (Some(&k), BindingValue::Int(i)) => BindingValue::Int(i + off[k] as i64),
                        _ => val.clone(),
                    };
                    (name.clone(), val)
                });
                inst.add_row(&b.constraint, row);
            }
        }
        (inst, offsets)
    }

    /// Ground program of a single example; its variables follow `ex.vars`.
    pub fn ground_example(&self, ex: &Example) -> Result<GroundProgram, TaskError> {
        let (inst, _) = self.instance(&[ex]);
        let g = ground_program(&self.program, &inst)?;
        if g.vars.len() != ex.vars.len() {
            return Err(TaskError::Invalid(format!(
                "{}: example grounds {} variables but declares {}",
                self.name,
                g.vars.len(),
                ex.vars.len()
            )));
        }
        Ok(g)
    }

    pub fn gold(ex: &Example) -> Option<Vec<usize>> {
        ex.vars.iter().map(|v| v.label).collect()
    }

    /// Whether the gold labeling of `ex` satisfies every ground constraint.
    pub fn gold_satisfies(&self, ex: &Example) -> Result<bool, TaskError> {
        let g = self.ground_example(ex)?;
        let Some(gold) = TaskInstance::gold(ex) else {
            return Ok(true);
        };
        let sat = eval_ground(&g, &gold).map_err(|e| TaskError::Invalid(e.to_string()))?;
        Ok(sat.iter().all(|&b| b))
    }

    /// (predicted, gold) class pairs per readout; items without a gold
    /// label are skipped.
    pub fn read(&self, ex: &Example, assignment: &[usize]) -> Vec<(Vec<usize>, Vec<usize>)> {
        self.readouts
            .iter()
            .map(|r| match r {
                Readout::Labels { pred, .. } => {
                    let mut p = Vec::new();
                    let mut g = Vec::new();
                    for (v, &a) in ex.vars.iter().zip(assignment) {
                        if &v.pred == pred {
                            if let Some(l) = v.label {
                                p.push(a);
                                g.push(l);
                            }
                        }
                    }
                    (p, g)
                }
                Readout::OneHot { pred, n_classes } => {
                    // row -> (predicted true classes, gold true classes, fully labeled)
                    let mut rows: BTreeMap<i64, (Vec<usize>, Vec<usize>, bool)> = BTreeMap::new();
                    for (v, &a) in ex.vars.iter().zip(assignment) {
                        if &v.pred != pred {
                            continue;
                        }
                        let class = v.args[1] as usize;
                        let e = rows.entry(v.args[0]).or_insert((Vec::new(), Vec::new(), true));
                        if a == 1 {
                            e.0.push(class);
                        }
                        match v.label {
                            Some(1) => e.1.push(class),
                            Some(_) => {}
                            None => e.2 = false,
                        }
                    }
                    let one = |c: &[usize]| if c.len() == 1 { c[0] } else { *n_classes };
                    rows.values().filter(|r| r.2).map(|r| (one(&r.0), one(&r.1))).unzip()
                }
            })
            .collect()
    }

    pub fn data<'a>(&'a self, examples: &'a [Example], direct_labels: bool) -> TaskData<'a> {
        TaskData {
            task: self,
            examples,
            direct_labels,
        }
    }

    /// `id,feature...,label` per decision variable, features taken from the
    /// variable's input row.
    pub fn to_csv(&self, examples: &[Example]) -> String {
        let mut out = String::new();
        let width = self
            .strong
            .iter()
            .filter_map(head_input)
            .map(|k| self.inputs[k].width)
            .max()
            .unwrap_or(0);
        out.push_str("id");
        for i in 0..width {
            let _ = write!(out, ",f{i}");
        }
        out.push_str(",label\n");
        for (e, ex) in examples.iter().enumerate() {
            for v in &ex.vars {
                let args: Vec<String> = v.args.iter().map(|a| a.to_string()).collect();
                let _ = write!(out, "{e}:{}({})", v.pred, args.join(" "));
                let feats: &[f64] = match head_input(&self.strong[v.head]) {
                    Some(k) => &ex.inputs[k][v.args[0] as usize],
                    None => &[],
                };
                for i in 0..width {
                    match feats.get(i) {
                        Some(x) => {
                            let _ = write!(out, ",{x}");
                        }
                        None => out.push(','),
                    }
                }
                match v.label {
                    Some(l) => {
                        let _ = writeln!(out, ",{l}");
                    }
                    None => out.push_str(",\n"),
                }
            }
        }
        out
    }

    /// Variables and binding rows of each example as JSON.
    pub fn bindings_json(&self, examples: &[Example]) -> String {
        #[derive(Serialize)]
        struct Entry<'a> {
            example: usize,
            vars: &'a [VarSpec],
            bindings: &'a [BindingRow],
        }
        let entries: Vec<Entry> = examples
            .iter()
            .enumerate()
            .map(|(i, ex)| Entry {
                example: i,
                vars: &ex.vars,
                bindings: &ex.bindings,
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("bindings serialize")
    }
}

/// Examples of a task viewed as a source of training batches.
pub struct TaskData<'a> {
    pub task: &'a TaskInstance,
    pub examples: &'a [Example],
    /// Supervise every labeled variable, not only those marked supervised.
    pub direct_labels: bool,
}

impl TaskData<'_> {
    pub fn build(&self, chunk: &[usize]) -> Result<Batch, TrainError> {
        let task = self.task;
        let exs: Vec<&Example> = chunk.iter().map(|&i| &self.examples[i]).collect();
        let (inst, row_off) = task.instance(&exs);
        let (program, skipped) = ground_batch(&task.program, &inst)?;
        let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); task.inputs.len()];
        for ex in &exs {
            for (k, r) in ex.inputs.iter().enumerate() {
                rows[k].extend(r.iter().cloned());
            }
        }
        let spec = &task.strong;
        let mut base = Vec::with_capacity(spec.len());
        let mut at = 0;
        for h in spec {
            base.push(at);
            at += match head_input(h) {
                Some(k) => rows[k].len() * head_width(h),
                None => head_width(h),
            };
        }
        let mut offsets = Vec::new();
        let mut targets = Vec::new();
        let mut owner = Vec::new();
        for (e, (ex, off)) in exs.iter().zip(&row_off).enumerate() {
            for v in &ex.vars {
                owner.push(e);
                let h = &spec[v.head];
                offsets.push(match head_input(h) {
                    Some(k) => base[v.head] + (off[k] + v.args[0] as usize) * head_width(h) + v.col,
                    None => base[v.head] + v.col,
                });
                targets.push(if v.supervised || self.direct_labels { v.label } else { None });
            }
        }
        let inputs = rows
            .iter()
            .zip(&task.inputs)
            .map(|(r, s)| {
                if r.is_empty() {
                    Ok(Tensor::zeros(&[0, s.width]))
                } else {
                    Tensor::from_rows(r)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        // name each constraint by its example and rank within that example
        let mut seen: BTreeMap<(usize, &str), usize> = BTreeMap::new();
        let ids = program
            .constraints
            .iter()
            .map(|c| match c.scope.first() {
                Some(&v) => {
                    let e = owner[v];
                    let k = seen.entry((e, c.template.as_str())).or_default();
                    *k += 1;
                    format!("{}:{}#{}", chunk[e], c.template, *k - 1)
                }
                None => c.id(),
            })
            .collect();
        Ok(Batch {
            inputs,
            program,
            offsets,
            targets,
            skipped,
            ids: Some(ids),
        })
    }
}

impl BatchSource for TaskData<'_> {
    fn len(&self) -> usize {
        self.examples.len()
    }

    fn batch(&self, examples: &[usize]) -> Result<Batch, TrainError> {
        self.build(examples)
    }
}

/// Splits `items` into train/dev/test by the given counts, in order.
pub(crate) fn split3<T>(mut items: Vec<T>, n_train: usize, n_dev: usize) -> (Vec<T>, Vec<T>, Vec<T>) {
    let test = items.split_off(n_train + n_dev);
    let dev = items.split_off(n_train);
    (items, dev, test)
}

pub(crate) fn mlp_head(input: usize, widths: &[usize]) -> HeadSpec {
    HeadSpec::Mlp {
        input,
        widths: widths.to_vec(),
        activation: crate::autodiff::Activation::Relu,
    }
}

pub(crate) fn parse_task_program(name: &str, text: &str) -> ConstraintProgram {
    crate::lang::parse_program(text).unwrap_or_else(|e| panic!("{name} program does not parse: {e}"))
}

/// Every task generator with its default sizes, by name.
pub fn generate(name: &str, seed: u64) -> Result<TaskInstance, TaskError> {
    Ok(match name {
        "digit_exclusive" => gen_digit_exclusive(1000, seed),
        "hierarchy" => gen_hierarchy(800, seed),
        "consistency" => gen_consistency_pairs(300, seed),
        "implication" => gen_implication_graph(20, seed),
        "entity_relation" => gen_entity_relation(400, seed),
        "bio" => gen_bio(400, seed),
        "digit_sum" => gen_digit_sum(1000, seed),
        "sudoku6" => gen_sudoku(6, 18, seed)?,
        "sudoku9" => gen_sudoku(9, 36, seed)?,
        other => return Err(TaskError::Invalid(format!("unknown task `{other}`"))),
    })
}

pub const TASK_NAMES: [&str; 9] = [
    "digit_exclusive",
    "hierarchy",
    "consistency",
    "implication",
    "entity_relation",
    "bio",
    "digit_sum",
    "sudoku6",
    "sudoku9",
];
