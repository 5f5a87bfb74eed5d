//! Runs an experiment: per seed, build the task, train, decode, score.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use ncl_core::compile::{capability_matrix, program_categories, Category, Method, Support};
use ncl_core::eval::{evaluate, fingerprint, make_report, median_of, split_low_data, write_report, Evaluation, Report, RunRecord};
use ncl_core::infer::{IlpOptions, InferMethod};
use ncl_core::tasks::{
    gen_bio, gen_consistency_pairs, gen_digit_exclusive_with, gen_digit_sum, gen_entity_relation, gen_hierarchy,
    gen_implication_graph, gen_sudoku, load_conll, load_mnist_idx, Example, TaskInstance, DIGIT_NOISE,
};
use ncl_core::train::{semantic_space, train, write_trace_jsonl, EpochTrace, Model, TrainMethod};

use crate::config::{DataSource, ExperimentConfig, MethodSection};
use crate::CliError;

/// Builds the task for one seed from the configured source.
pub fn load_task(cfg: &ExperimentConfig, seed: u64) -> Result<TaskInstance, CliError> {
    let id = cfg.task.id.as_str();
    let (size, givens, noise) = match &cfg.task.source {
        DataSource::Mnist { images, labels } => {
            return Ok(load_mnist_idx(&images.to_string_lossy(), &labels.to_string_lossy())?);
        }
        DataSource::Conll { path } => return Ok(load_conll(&path.to_string_lossy())?),
        DataSource::Generate { size, givens, noise } => (*size, *givens, *noise),
    };
    if givens.is_some() && !id.starts_with("sudoku") {
        return Err(CliError::Config(format!("source.givens does not apply to task `{id}`")));
    }
    if noise.is_some() && id != "digit_exclusive" {
        return Err(CliError::Config(format!("source.noise does not apply to task `{id}`")));
    }
    if size.is_some() && id.starts_with("sudoku") {
        return Err(CliError::Config("sudoku tasks are a single puzzle; use source.givens".into()));
    }
    let n = |d: usize| size.unwrap_or(d);
    let task = match id {
        "digit_exclusive" => gen_digit_exclusive_with(n(1000), seed, noise.unwrap_or(DIGIT_NOISE)),
        "hierarchy" => gen_hierarchy(n(800), seed),
        "consistency" => gen_consistency_pairs(n(300), seed),
        "implication" => gen_implication_graph(n(20), seed),
        "entity_relation" => gen_entity_relation(n(400), seed),
        "bio" => gen_bio(n(400), seed),
        "digit_sum" => gen_digit_sum(n(1000), seed),
        "sudoku6" => gen_sudoku(6, givens.unwrap_or(18), seed)?,
        "sudoku9" => gen_sudoku(9, givens.unwrap_or(36), seed)?,
        other => return Err(CliError::Config(format!("unknown task `{other}`"))),
    };
    Ok(task)
}

fn train_capability(m: TrainMethod) -> Option<Method> {
    match m {
        TrainMethod::None => None,
        TrainMethod::Pd => Some(Method::Pd),
        TrainMethod::SampL => Some(Method::SampL),
        TrainMethod::SemL => Some(Method::SemL),
    }
}

/// Constraint categories of the task, read off one grounded example.
pub fn task_categories(task: &TaskInstance) -> Result<BTreeSet<Category>, CliError> {
    let ex = task
        .train
        .first()
        .or(task.test.first())
        .ok_or_else(|| CliError::Config(format!("task `{}` has no examples", task.name)))?;
    let g = task.ground_example(ex)?;
    Ok(program_categories(&task.program, &g))
}

/// Rejects method choices whose capability cell is unsupported for the
/// task's constraint categories.
pub fn check_capability(task: &TaskInstance, m: &MethodSection) -> Result<(), CliError> {
    let cats = task_categories(task)?;
    let methods: Vec<Method> = train_capability(m.train).into_iter().chain(m.infer.capability()).collect();
    for row in capability_matrix(&methods, &cats) {
        if let Some((cat, _)) = row.per_category.iter().find(|(_, s)| *s == Support::Unsupported) {
            return Err(CliError::Config(format!(
                "capability_matrix[{}][{}] is unsupported for task `{}`",
                row.method,
                cat.name(),
                task.name
            )));
        }
    }
    if matches!(m.infer, InferMethod::Viterbi | InferMethod::AStar) && task.transitions.is_none() {
        return Err(CliError::Config(format!(
            "capability_matrix[{}][{}] requires a sequence task; `{}` has none",
            m.infer.name(),
            Category::Sequential.name(),
            task.name
        )));
    }
    Ok(())
}

/// The exact semantic loss enumerates each batch; rejects configs whose
/// first batch already exceeds the cap.
pub fn check_resources(task: &TaskInstance, cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.method.train != TrainMethod::SemL || task.train.is_empty() {
        return Ok(());
    }
    let n = cfg.train.batch_size.min(task.train.len());
    let idx: Vec<usize> = (0..n).collect();
    let b = task.data(&task.train, cfg.method.direct_labels).build(&idx)?;
    let size = semantic_space(&b.program);
    if size > cfg.train.semantic_cap as u128 {
        return Err(CliError::Config(format!(
            "seml on `{}`: per-component assignment space {size} exceeds train.semantic_cap {}; use sampl",
            task.name, cfg.train.semantic_cap
        )));
    }
    Ok(())
}

/// Loads and gates the task of the first seed without training.
pub fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.check()?;
    let task = load_task(cfg, cfg.run.seeds[0])?;
    check_capability(&task, &cfg.method)?;
    check_resources(&task, cfg)
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub record: RunRecord,
    pub eval: Evaluation,
    pub trace: Vec<EpochTrace>,
    pub skipped: usize,
    pub n_train: usize,
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun, CliError> {
    let task = load_task(cfg, seed)?;
    check_capability(&task, &cfg.method)?;
    check_resources(&task, cfg)?;
    let strata: Vec<Option<usize>> = task.train.iter().map(|e| e.stratum).collect();
    let keep = split_low_data(&strata, cfg.run.data_fraction, seed)?;
    let train_set: Vec<Example> = keep.iter().map(|&i| task.train[i].clone()).collect();
    let variant = cfg.model.variant.variant();
    let mut model = Model::build(task.model_spec(variant), seed).map_err(|e| CliError::Run(e.to_string()))?;
    let tc = cfg.train_config(seed);
    let (trace, skipped) = if tc.epochs == 0 {
        (Vec::new(), 0)
    } else {
        let out = train(&mut model, &task.data(&train_set, cfg.method.direct_labels), &tc)?;
        (out.trace, out.skipped)
    };
    let epoch_ms: Vec<f64> = trace.iter().map(|t| t.ms).collect();
    let train_ms = if train_set.is_empty() {
        0.0
    } else {
        median_of(&epoch_ms) / train_set.len() as f64
    };
    let opts = IlpOptions {
        timeout: Duration::from_millis(cfg.run.timeout_ms),
    };
    let eval = evaluate(&task, &model, &task.test, cfg.method.infer, &opts)?;
    if eval.not_optimal > 0 {
        log::warn!("seed {seed}: {} examples decoded without an optimality proof", eval.not_optimal);
    }
    let tc_json = serde_json::to_string(&tc).expect("config serializes");
    let record = RunRecord {
        task: task.name.clone(),
        train_method: cfg.method.train_name(),
        infer_method: cfg.method.infer.name().into(),
        metric: task.metric.name().into(),
        value: eval.metric,
        violation_rate: eval.violation_rate,
        train_ms_per_example: train_ms,
        infer_ms_per_example: eval.infer_ms_per_example,
        data_fraction: cfg.run.data_fraction,
        variant: cfg.model.variant.name().into(),
        seed,
        fingerprint: fingerprint(&tc_json, &task.program_text),
    };
    Ok(SeedRun {
        record,
        eval,
        trace,
        skipped,
        n_train: train_set.len(),
    })
}

fn run_stem(r: &RunRecord) -> String {
    format!(
        "{}_{}_{}_{}_seed{}",
        r.task,
        r.method_id().replace('+', "-"),
        r.variant,
        (r.data_fraction * 100.0).round() as u64,
        r.seed
    )
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Run(format!("{}: {e}", path.display()))
}

fn write_seed(out: &Path, run: &SeedRun) -> Result<(), CliError> {
    let stem = run_stem(&run.record);
    let runs = out.join("runs");
    let traces = out.join("traces");
    for d in [&runs, &traces] {
        std::fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
    }
    let p = runs.join(format!("{stem}.json"));
    let body = serde_json::to_string_pretty(&run.record).expect("record serializes") + "\n";
    std::fs::write(&p, body).map_err(|e| io_err(&p, e))?;
    let p = traces.join(format!("{stem}.jsonl"));
    let f = std::fs::File::create(&p).map_err(|e| io_err(&p, e))?;
    write_trace_jsonl(&run.trace, std::io::BufWriter::new(f)).map_err(|e| io_err(&p, e))
}

/// Runs every seed (up to `run.jobs` at a time), writes per-seed records,
/// traces and the report into `run.out`, and returns the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report, CliError> {
    cfg.check()?;
    // surface config errors before any training
    validate(cfg)?;
    let seeds = &cfg.run.seeds;
    let results: Mutex<Vec<Option<Result<SeedRun, CliError>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    let next = Mutex::new(0usize);
    std::thread::scope(|s| {
        for _ in 0..cfg.run.jobs.min(seeds.len()) {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().expect("seed queue");
                    let i = *n;
                    *n += 1;
                    i
                };
                if i >= seeds.len() {
                    break;
                }
                let r = run_seed(cfg, seeds[i]);
                results.lock().expect("results")[i] = Some(r);
            });
        }
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in seeds.iter().zip(results.into_inner().expect("results")) {
        match r.expect("every seed ran") {
            Ok(run) => {
                log::info!(
                    "{} seed {seed}: {} {:.4}, violation {:.4}",
                    run.record.method_id(),
                    run.record.metric,
                    run.record.value,
                    run.record.violation_rate
                );
                write_seed(&cfg.run.out, &run)?;
                records.push(run.record);
            }
            Err(CliError::Config(m)) => return Err(CliError::Config(m)),
            Err(e) => failures.push(format!("seed {seed}: {e}")),
        }
    }
    let report = if records.is_empty() {
        None
    } else {
        let r = make_report(&records)?;
        write_report(&r, &cfg.run.out)?;
        Some(r)
    };
    match (failures.is_empty(), report) {
        (true, Some(r)) => Ok(r),
        _ => Err(CliError::Run(failures.join("; "))),
    }
}

/// Collects run records from `runs/*.json` under each directory (or the
/// named files) and builds a merged report.
pub fn merge_runs(paths: &[PathBuf]) -> Result<Report, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let dir = if p.join("runs").is_dir() { p.join("runs") } else { p.clone() };
            let entries = std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))?;
            for e in entries {
                let path = e.map_err(|e| io_err(&dir, e))?.path();
                if path.extension().is_some_and(|x| x == "json") {
                    files.push(path);
                }
            }
        } else {
            files.push(p.clone());
        }
    }
    files.sort();
    let mut records = Vec::with_capacity(files.len());
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| io_err(f, e))?;
        let r: RunRecord = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", f.display())))?;
        records.push(r);
    }
    Ok(make_report(&records)?)
}
