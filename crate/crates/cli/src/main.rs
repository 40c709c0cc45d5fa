//! `mlab`: configuration-driven experiment runner.
//!
//! Exit status: 0 when every declared assertion passes, 1 when one fails (or
//! the run itself fails), 2 when the configuration does not validate.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::SystemTime;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod config;
mod experiments;
mod params;
mod report;

use config::{resolve, sample_config, ConfigError, RawConfig, RunConfig, SEED_ENV};
use experiments::{lookup, REGISTRY};

#[derive(Parser)]
#[command(name = "mlab", version, about = "Run Markov-selection experiments from config files")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment a config describes.
    Run {
        config: PathBuf,
        /// Parameter overrides: `--key value` or `--key=value`.
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// List the registered experiments.
    List,
    /// Check a config without running it.
    Validate {
        config: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        overrides: Vec<String>,
    },
    /// Print a sample config for one experiment.
    Sample { experiment: String },
}

const EXIT_ASSERTION: u8 = 1;
const EXIT_INVALID: u8 = 2;

fn load(path: &PathBuf, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut raw = RawConfig::load(path)?;
    raw.apply_env(std::env::var(SEED_ENV).ok());
    raw.apply_flags(overrides)?;
    resolve(&raw)
}

/// Errors from the library that reflect bad parameters rather than a failed run.
fn is_invalid_input(e: &anyhow::Error) -> bool {
    use mlab_core::Error;
    matches!(
        e.downcast_ref::<Error>(),
        Some(
            Error::InvalidGrid(_)
                | Error::InvalidParameter { .. }
                | Error::Domain { .. }
                | Error::Inadmissible(_)
                | Error::Unbounded(_)
                | Error::HorizonTooShort { .. }
        )
    )
}

fn run(run: RunConfig) -> ExitCode {
    let started = SystemTime::now();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(run.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(EXIT_ASSERTION);
        }
    };
    let outcome = pool.install(|| (run.experiment.run)(&run.params, run.seed));
    let outcome = match outcome {
        Ok(o) => o,
        Err(e) if is_invalid_input(&e) => {
            eprintln!("error: invalid parameters for `{}`: {e:#}", run.experiment.name);
            return ExitCode::from(EXIT_INVALID);
        }
        Err(e) => {
            eprintln!("error: experiment `{}` failed: {e:#}", run.experiment.name);
            return ExitCode::from(EXIT_ASSERTION);
        }
    };
    let files = match pool.install(|| report::write_all(&run, &outcome, started)) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_ASSERTION);
        }
    };
    for a in &outcome.assertions {
        println!("[{}] {}", if a.pass { "PASS" } else { "FAIL" }, a.describe());
    }
    println!("wrote {} files to {}", files.len(), run.output.display());
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        for a in outcome.assertions.iter().filter(|a| !a.pass) {
            eprintln!("assertion failed: {}", a.describe());
        }
        ExitCode::from(EXIT_ASSERTION)
    }
}

fn list() {
    let width = REGISTRY.iter().map(|e| e.name.len()).max().unwrap_or(0);
    for e in &REGISTRY {
        let required: Vec<&str> = e.required().map(|p| p.key).collect();
        let required = if required.is_empty() {
            "-".to_string()
        } else {
            required.join(", ")
        };
        println!("{:<width$}  {}  [required: {required}]", e.name, e.description);
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, overrides } => match load(&config, &overrides) {
            Ok(r) => run(r),
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INVALID)
            }
        },
        Command::Validate { config, overrides } => match load(&config, &overrides) {
            Ok(r) => {
                println!("ok: {} ({} parameters, seed {})", r.experiment.name, r.resolved.len(), r.seed);
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_INVALID)
            }
        },
        Command::List => {
            list();
            ExitCode::SUCCESS
        }
        Command::Sample { experiment } => match lookup(&experiment) {
            Some(e) => {
                print!("{}", sample_config(e));
                ExitCode::SUCCESS
            }
            None => {
                eprintln!("error: unknown experiment `{experiment}` (see `mlab list`)");
                ExitCode::from(EXIT_INVALID)
            }
        },
    }
}
