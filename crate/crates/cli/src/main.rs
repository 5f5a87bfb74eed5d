use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use ncl_cli::{load_task, merge_runs, run_experiment, task_categories, validate, CliError, ExperimentConfig, Overrides};
use ncl_core::compile::{capability_matrix, linearize, read_lp, write_lp, Method};
use ncl_core::eval::write_report;
use ncl_core::infer::{ilp_map_with, read_probs_csv, IlpOptions};

#[derive(Parser)]
#[command(name = "ncl", version, about = "Constraint-integration experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// ILP solver time limit per example.
    #[arg(long)]
    timeout_ms: Option<u64>,
    /// Seeds run in parallel.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct Dump {
    #[command(flatten)]
    common: Common,
    /// Test example to ground.
    #[arg(long, default_value_t = 0)]
    example: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train, decode and report every seed.
    Run(Common),
    /// Check the config and the method capability for the task.
    Validate(Common),
    /// Print the ground program of one test example.
    Ground(Dump),
    /// Print the 0-1 linear system of one test example in LP format.
    Compile(Dump),
    /// MAP-solve an LP file against a probability CSV.
    Solve {
        #[arg(long)]
        lp: PathBuf,
        #[arg(long)]
        probs: PathBuf,
        #[arg(long, default_value_t = 60_000)]
        timeout_ms: u64,
    },
    /// Merge run records from earlier `run` outputs into one report.
    Report {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    cfg.apply(&Overrides {
        seed: c.seed,
        out: c.out.clone(),
        timeout_ms: c.timeout_ms,
        jobs: c.jobs,
    });
    cfg.check()?;
    Ok(cfg)
}

fn ground(d: &Dump) -> Result<ncl_core::lang::GroundProgram, CliError> {
    let cfg = load(&d.common)?;
    let task = load_task(&cfg, cfg.run.seeds[0])?;
    let ex = task
        .test
        .get(d.example)
        .ok_or_else(|| CliError::Config(format!("task has {} test examples", task.test.len())))?;
    Ok(task.ground_example(ex)?)
}

fn read(p: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
}

fn execute(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run(c) => {
            let cfg = load(&c)?;
            let report = run_experiment(&cfg)?;
            print!("{}", report.to_text());
        }
        Cmd::Validate(c) => {
            let cfg = load(&c)?;
            validate(&cfg)?;
            let task = load_task(&cfg, cfg.run.seeds[0])?;
            let cats = task_categories(&task)?;
            println!("{}: ok", c.config.display());
            for row in capability_matrix(&Method::ALL, &cats) {
                let cells: Vec<String> = row.per_category.iter().map(|(c, s)| format!("{}={}", c.name(), s.name())).collect();
                println!("  {:<8} {}", row.method.name(), cells.join(" "));
            }
        }
        Cmd::Ground(d) => print!("{}", ground(&d)?.to_text()),
        Cmd::Compile(d) => print!("{}", write_lp(&linearize(&ground(&d)?))),
        Cmd::Solve { lp, probs, timeout_ms } => {
            let ls = read_lp(&read(&lp)?).map_err(|e| CliError::Config(format!("{}: {e}", lp.display())))?;
            let table = read_probs_csv(&read(&probs)?, &ls).map_err(|e| CliError::Config(e.to_string()))?;
            let opts = IlpOptions {
                timeout: Duration::from_millis(timeout_ms),
            };
            let s = ilp_map_with(&table, &ls, &opts).map_err(|e| CliError::Run(e.to_string()))?;
            println!("objective {}", s.objective);
            println!("optimal {}", s.stats.optimal);
            for (v, &l) in s.assignment.iter().enumerate() {
                println!("{} {}", ls.decision_names[v], ls.label_names[v][l]);
            }
        }
        Cmd::Report { inputs, out } => {
            let report = merge_runs(&inputs)?;
            write_report(&report, &out)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
