//! Experiment configuration: a TOML file with `[task]`, `[model]`,
//! `[method]`, `[train]` and `[run]` sections.

use std::path::{Path, PathBuf};

use ncl_core::infer::InferMethod;
use ncl_core::tasks::Variant;
use ncl_core::train::{TrainConfig, TrainMethod};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub method: MethodSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSection {
    pub id: String,
    #[serde(default)]
    pub source: DataSource,
}

/// Where examples come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSource {
    /// Synthetic generator; unset fields take the task defaults.
    Generate {
        #[serde(default)]
        size: Option<usize>,
        /// Sudoku only: number of given cells.
        #[serde(default)]
        givens: Option<usize>,
        /// Digit tasks only: pixel noise.
        #[serde(default)]
        noise: Option<f64>,
    },
    /// IDX image and label files, paired into digit sums.
    Mnist { images: PathBuf, labels: PathBuf },
    /// Whitespace-separated token/tag columns.
    Conll { path: PathBuf },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Generate {
            size: None,
            givens: None,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub variant: VariantName,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantName {
    Simple,
    #[default]
    Strong,
}

impl VariantName {
    pub fn variant(self) -> Variant {
        match self {
            VariantName::Simple => Variant::Simple,
            VariantName::Strong => Variant::Strong,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            VariantName::Simple => "simple",
            VariantName::Strong => "strong",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSection {
    #[serde(default)]
    pub train: TrainMethod,
    #[serde(default)]
    pub infer: InferMethod,
    /// Supervise with the latent labels instead of only the task targets.
    #[serde(default)]
    pub direct_labels: bool,
}

impl MethodSection {
    pub fn train_name(&self) -> String {
        match (self.train, self.direct_labels) {
            (TrainMethod::None, true) => "labels".into(),
            (m, true) => format!("{}+labels", m.name()),
            (m, false) => m.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "one")]
    pub data_fraction: f64,
    #[serde(default = "zero_seed")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "one_job")]
    pub jobs: usize,
}

fn one() -> f64 {
    1.0
}
fn zero_seed() -> Vec<u64> {
    vec![0]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_timeout() -> u64 {
    60_000
}
fn one_job() -> usize {
    1
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            data_fraction: one(),
            seeds: zero_seed(),
            out: default_out(),
            timeout_ms: default_timeout(),
            jobs: one_job(),
        }
    }
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub timeout_ms: Option<u64>,
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.run.seeds = vec![s];
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
        if let Some(t) = o.timeout_ms {
            self.run.timeout_ms = t;
        }
        if let Some(j) = o.jobs {
            self.run.jobs = j;
        }
    }

    /// Checks that need no data; method support is checked against the
    /// grounded task by the runner.
    pub fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.run.data_fraction > 0.0 && self.run.data_fraction <= 1.0) {
            return bad(format!("run.data_fraction {} outside (0, 1]", self.run.data_fraction));
        }
        if self.run.seeds.is_empty() {
            return bad("run.seeds is empty".into());
        }
        if self.run.jobs == 0 {
            return bad("run.jobs must be at least 1".into());
        }
        if self.train.method != TrainMethod::None && self.train.method != self.method.train {
            return bad("train.method conflicts with method.train; set the method in [method]".into());
        }
        if self.train.seed != 0 {
            return bad("train.seed is taken from run.seeds".into());
        }
        self.train.validate().map_err(|e| CliError::Config(format!("train: {e}")))?;
        match (&self.task.source, self.task.id.as_str()) {
            (DataSource::Mnist { .. }, "digit_sum") | (DataSource::Conll { .. }, "bio") => {}
            (DataSource::Generate { .. }, _) => {}
            (DataSource::Mnist { .. }, id) => return bad(format!("mnist source does not apply to task `{id}`")),
            (DataSource::Conll { .. }, id) => return bad(format!("conll source does not apply to task `{id}`")),
        }
        Ok(())
    }

    /// Training config for one seed.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            method: self.method.train,
            ..self.train.clone()
        }
    }
}
