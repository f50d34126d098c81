//! `coalfrag` command-line driver.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 runtime failure,
//! 4 failed verification verdict.

mod config;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Format, Mode, Overrides};
use run::Failure;

/// Caps the worker count regardless of `--workers`.
const WORKERS_ENV: &str = "COALFRAG_MAX_WORKERS";

#[derive(Parser)]
#[command(name = "coalfrag", version, about = "Coalescence-fragmentation simulator and verification suite")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Sample independent trajectories.
    Simulate(Args),
    /// Run coupled pairs that share their Poisson randomness.
    Couple(Args),
    /// Randomized inequality suite.
    Verify(Args),
    /// Compare the simulator against the master-equation oracle.
    Oracle(Args),
    /// Tabulate the closed-form bounds of a configuration.
    Bounds(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads (default: available cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Validate and print the normalized spec without running.
    #[arg(long)]
    dry_run: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.verb) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprint!("{f}");
            if !matches!(f, Failure::Validation(_)) {
                eprintln!();
            }
            ExitCode::from(f.exit_code() as u8)
        }
    }
}

fn execute(verb: Verb) -> Result<(), Failure> {
    let (mode, args) = match verb {
        Verb::Simulate(a) => (Mode::Simulate, a),
        Verb::Couple(a) => (Mode::Couple, a),
        Verb::Verify(a) => (Mode::VerifyInequalities, a),
        Verb::Oracle(a) => (Mode::OracleCompare, a),
        Verb::Bounds(a) => (Mode::BoundsReport, a),
    };
    let raw = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Validation(vec![format!("config: cannot read {}: {e}", path.display())]))?;
            config::parse(&text).map_err(Failure::Validation)?
        }
        None => config::RawSpec::default(),
    };
    let over = Overrides {
        mode: Some(mode),
        seed: args.seed,
        replicas: args.replicas,
        out: args.out,
        format: args.format,
    };
    let spec = config::validate(raw, &over).map_err(Failure::Validation)?;
    if args.dry_run {
        print!("{}", spec.normalized());
        return Ok(());
    }
    init_workers(args.workers)?;
    let done = run::run(&spec)?;
    print!("{}", done.report);
    done.verdict.map_err(Failure::Verdict)
}

fn init_workers(requested: Option<usize>) -> Result<(), Failure> {
    let cap = match std::env::var(WORKERS_ENV) {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| {
            Failure::Validation(vec![format!("{WORKERS_ENV}: expected a positive integer, got '{v}'")])
        })?),
        Err(_) => None,
    };
    let default = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut n = requested.unwrap_or(default);
    if let Some(c) = cap {
        n = n.min(c);
    }
    if n == 0 {
        return Err(Failure::Validation(vec!["workers: must be positive".into()]));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}
