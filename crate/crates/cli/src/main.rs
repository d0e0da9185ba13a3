mod commands;
mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

/// Flexible marked point process models for event sequences.
#[derive(Debug, Parser)]
#[command(name = "flexpoint", version)]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "FLEXPOINT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate an event table.
    Ingest(RunConfig),
    /// Count excitation pairs and keep the strongest rules.
    Screen(RunConfig),
    /// Sample the posterior of one model.
    Fit(RunConfig),
    /// Rank fitted models by out-of-sample lpd.
    Evaluate(RunConfig),
    /// Per-event branching probabilities under the posterior mean.
    Branch(RunConfig),
    /// Interval forecasts of target marks with a moving-average baseline.
    Simulate(RunConfig),
    /// K-function and inter-event ECDF tables of target-mark times.
    Diagnose(RunConfig),
}

impl Command {
    fn parts(&self) -> (&'static str, &RunConfig) {
        match self {
            Command::Ingest(c) => ("ingest", c),
            Command::Screen(c) => ("screen", c),
            Command::Fit(c) => ("fit", c),
            Command::Evaluate(c) => ("evaluate", c),
            Command::Branch(c) => ("branch", c),
            Command::Simulate(c) => ("simulate", c),
            Command::Diagnose(c) => ("diagnose", c),
        }
    }
}

/// A failed run with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub msg: String,
}

impl Failure {
    pub const VALIDATION: u8 = 1;
    pub const RUNTIME: u8 = 2;

    pub fn validation(msg: impl Into<String>) -> Self {
        Failure {
            code: Self::VALIDATION,
            msg: msg.into(),
        }
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        Failure {
            code: Self::RUNTIME,
            msg: msg.into(),
        }
    }
}

impl From<flexpoint::Error> for Failure {
    fn from(e: flexpoint::Error) -> Self {
        use flexpoint::Error as E;
        match e {
            E::Parse { .. } | E::OutOfRange { .. } | E::InvalidArgument(_) | E::Json(_) => {
                Failure::validation(e.to_string())
            }
            E::Domain(_) | E::NonFinite { .. } | E::Sampler(_) | E::Io(_) => Failure::runtime(e.to_string()),
        }
    }
}

const USAGE_ERROR: u8 = 64;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE_ERROR } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(USAGE_ERROR);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(Failure::RUNTIME);
        }
    }
    let (name, flags) = cli.command.parts();
    let result = RunConfig::load(cli.config.as_deref(), flags).and_then(|cfg| commands::dispatch(name, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
