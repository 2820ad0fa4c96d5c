//! `wolfflab`: experiment runner for the Wolff-potential laboratory.
//!
//! Exit status: 0 on success, 1 when a run fails or an acceptance bound is
//! violated, 2 for invalid configuration or arguments.

mod cache;
mod config;
mod tasks;

use clap::{Parser, Subcommand};
use config::{ConfigError, ExperimentConfig, Task, TolOverrides};
use std::path::PathBuf;
use std::process::ExitCode;
use tasks::{AcceptanceFailure, RunContext};

/// Overrides the output directory from the config file.
const OUT_ENV: &str = "WOLFFLAB_OUT";

#[derive(Parser, Debug)]
#[command(name = "wolfflab", version, about = "Wolff potentials, singular parabolic solves and pointwise-estimate audits")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; beats WOLFFLAB_OUT and the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for sample-point and cylinder selection.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the numerical kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Comma-separated tolerances, e.g. `wolff=1e-9,solver=1e-11,root=1e-10,stop=1e-6`.
    #[arg(long, global = true, value_name = "KEY=VALUE,...")]
    tol_overrides: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the configured problem; write the field, its sidecar and time slices.
    Solve,
    /// Evaluate the Wolff potential at the configured points and radii.
    Wolff,
    /// Level functional and energy audit on the configured cylinder.
    Functionals {
        /// Saved field to use instead of solving.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Run the level iteration at the configured point.
    Iterate {
        /// Saved field to use instead of solving.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Run a suite and fail when any asserted bound is violated.
    Verify {
        /// Suite name; defaults to the config's `suite` key.
        #[arg(long)]
        suite: Option<String>,
    },
    /// Run a suite and write its reports without enforcing the bounds.
    Suite {
        #[arg(long)]
        suite: Option<String>,
    },
    /// Run the config's `tasks` list in dependency order.
    Run,
}

enum Failure {
    Config(String),
    Run(String),
    Acceptance(Vec<String>),
}

fn classify(e: anyhow::Error) -> Failure {
    if let Some(c) = e.downcast_ref::<ConfigError>() {
        return Failure::Config(c.to_string());
    }
    if let Some(a) = e.downcast_ref::<AcceptanceFailure>() {
        return Failure::Acceptance(a.0.clone());
    }
    if let Some(c) = e.downcast_ref::<wolfflab_core::Error>() {
        if c.is_input_error() {
            return Failure::Config(format!("{}: {c}", c.kind()));
        }
    }
    Failure::Run(format!("{e:#}"))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::parse("")?,
    };
    let tol = match &cli.tol_overrides {
        Some(s) => TolOverrides::parse(s)?,
        None => TolOverrides::default(),
    };
    cfg.apply_overrides(cli.seed, &tol);
    Ok(cfg)
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let mut config = load_config(&cli)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(ConfigError::new("--threads must be at least 1").into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global()?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let field_path = match &cli.command {
        Command::Functionals { field } | Command::Iterate { field } => field.clone(),
        _ => None,
    };
    match &cli.command {
        Command::Verify { suite: Some(name) } | Command::Suite { suite: Some(name) } => config.select_suite(name)?,
        _ => {}
    }
    if matches!(cli.command, Command::Run) && config.tasks.iter().any(|t| t.needs_field()) {
        config.problem()?;
    }
    let ctx = RunContext {
        config,
        out,
        field_path,
    };
    match cli.command {
        Command::Solve => ctx.solve(),
        Command::Wolff => ctx.wolff(),
        Command::Functionals { .. } => ctx.functionals(),
        Command::Iterate { .. } => ctx.iterate(),
        Command::Verify { .. } => ctx.run(&[Task::Verify]),
        Command::Suite { .. } => ctx.suite(false),
        Command::Run => {
            let tasks = ctx.config.tasks.clone();
            ctx.run(&tasks)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli).map_err(classify) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Acceptance(lines)) => {
            for l in &lines {
                eprintln!("acceptance: {l}");
            }
            eprintln!("error: {} acceptance checks failed", lines.len());
            ExitCode::from(1)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
