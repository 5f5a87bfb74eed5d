//! Configuration-driven experiment runner.

pub mod config;
pub mod runner;

pub use config::{DataSource, ExperimentConfig, MethodSection, ModelSection, Overrides, RunSection, TaskSection, VariantName};
pub use runner::{check_capability, check_resources, load_task, merge_runs, run_experiment, run_seed, task_categories, validate, SeedRun};

use ncl_core::eval::EvalError;
use ncl_core::tasks::TaskError;
use ncl_core::train::TrainError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration or an unsupported method combination.
    #[error("config error: {0}")]
    Config(String),
    #[error("run failed: {0}")]
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl From<TaskError> for CliError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::Io { .. } | TaskError::Format { .. } | TaskError::Line { .. } => CliError::Config(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        CliError::Run(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Task(t) => t.into(),
            other => CliError::Run(other.to_string()),
        }
    }
}
