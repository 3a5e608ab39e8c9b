//! Experiment harness: runs JSON-configured experiments to CSV artifacts and
//! executes the acceptance checks.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 runtime failure,
//! 4 check-suite failure.

mod config;
mod manifest;
mod runner;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ConfigFile;
use manifest::Manifest;
use qsa::acceptance::{run_all, Scale};
use runner::RunContext;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    CheckFailed(usize),
}

impl CliError {
    fn io(e: std::io::Error) -> Self {
        Self::Runtime(format!("io error: {e}"))
    }

    fn runtime(e: qsa::Error) -> Self {
        Self::Runtime(e.to_string())
    }

    fn config(e: qsa::Error) -> Self {
        Self::Config(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 3,
            Self::CheckFailed(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "configuration error: {msg}"),
            Self::Runtime(msg) => write!(f, "runtime error: {msg}"),
            Self::CheckFailed(n) => write!(f, "{n} acceptance criterion(s) failed"),
        }
    }
}

/// Deterministic experiment runner for probed-ODE estimation studies.
#[derive(Parser)]
#[command(name = "qsa-cli", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        /// Path to the config (kind, seed, params).
        config: PathBuf,
        /// Output directory (default: $QSA_OUT_DIR, then ./qsa-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores). Results are identical for
        /// any value.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the acceptance criteria and print one line per criterion.
    Check {
        /// "quick" (default) or "full".
        #[arg(long, default_value = "quick")]
        suite: String,
    },
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("QSA_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("qsa-out"))
}

fn cmd_run(config_path: PathBuf, out: Option<PathBuf>, jobs: Option<usize>) -> Result<(), CliError> {
    let bytes = fs::read(&config_path).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let cfg: ConfigFile = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;

    let jobs = jobs.unwrap_or_else(num_threads);
    if jobs == 0 {
        return Err(CliError::Config("--jobs must be positive".into()));
    }
    // ignore the error when a global pool already exists (repeat invocations
    // in one process, e.g. under tests)
    let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();

    let out_dir = out.or(cfg.out_dir.clone()).unwrap_or_else(default_out_dir);
    let manifest = Manifest::new(&cfg.kind, cfg.seed, &bytes, jobs);
    let mut ctx = RunContext::new(out_dir, cfg.seed, manifest)?;
    runner::execute(&mut ctx, &cfg.kind, &cfg.params)?;
    let manifest_path = ctx.finish()?;
    println!("wrote {}", manifest_path.display());
    Ok(())
}

fn cmd_check(suite: &str) -> Result<(), CliError> {
    let scale = match suite {
        "quick" => Scale::Quick,
        "full" => Scale::Full,
        other => return Err(CliError::Config(format!("unknown suite '{other}'"))),
    };
    let reports = run_all(scale);
    let mut failures = 0;
    for report in &reports {
        println!("{}", report.summary_line());
        for line in &report.lines {
            println!("    {line}");
        }
        if !report.pass {
            failures += 1;
        }
    }
    println!(
        "{}/{} criteria passed ({suite} scale)",
        reports.len() - failures,
        reports.len()
    );
    if failures > 0 {
        return Err(CliError::CheckFailed(failures));
    }
    Ok(())
}

fn num_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out, jobs } => cmd_run(config, out, jobs),
        Command::Check { suite } => cmd_check(&suite),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
