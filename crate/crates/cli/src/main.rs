mod config;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use riebo::validation::run_suite;

use config::{Experiment, PartialConfig, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Oracle(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "riebo", version, about = "Run bilevel experiments on Riemannian manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write traces.
    Run {
        /// JSON config; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        flags: PartialConfig,
    },
    /// Run the built-in invariant suite.
    Validate {
        /// Fewer cases per check.
        #[arg(long)]
        fast: bool,
    },
}

fn validate(fast: bool) -> Result<bool, CliError> {
    let reports = run_suite(fast);
    let mut ok = true;
    for r in &reports {
        ok &= r.passed();
        let status = if r.passed() { "PASS" } else { "FAIL" };
        match &r.error {
            Some(e) => println!("{status} {:<36} error: {e}", r.name),
            None => println!(
                "{status} {:<36} worst {:.2e} tolerance {:.0e} ({:.2} s)",
                r.name, r.worst, r.tolerance, r.seconds
            ),
        }
    }
    println!("{} of {} checks passed", reports.iter().filter(|r| r.passed()).count(), reports.len());
    Ok(ok)
}

fn run(cfg: RunConfig) -> Result<bool, CliError> {
    if cfg.experiment == Experiment::Validate {
        return validate(false);
    }
    let threads = runner::thread_count();
    let runs = runner::run_all(&cfg, threads);
    output::write_outputs(&cfg, &runs, threads)?;
    for r in &runs {
        match (&r.error, r.records.last()) {
            (Some(e), _) => eprintln!("seed {}: aborted after {} records: {e}", r.seed, r.records.len()),
            (None, Some(last)) => println!(
                "seed {}: {} records, objective {:.6e}, grad norm {:.3e}",
                r.seed,
                r.records.len(),
                last.objective,
                last.grad_norm
            ),
            (None, None) => println!("seed {}: no records", r.seed),
        }
    }
    println!("wrote {}", cfg.out.display());
    if let Some(r) = runs.iter().find(|r| r.error.is_some()) {
        return Err(CliError::Oracle(format!("seed {}: {}", r.seed, r.error.as_deref().unwrap_or(""))));
    }
    Ok(true)
}

fn dispatch(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Validate { fast } => validate(fast),
        Command::Run { config, flags } => {
            let file = match &config {
                Some(path) => PartialConfig::from_file(path)?,
                None => PartialConfig::default(),
            };
            run(file.overlay(flags).resolve()?)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("riebo: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
