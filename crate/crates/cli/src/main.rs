//! `hqi`: generate datasets, build indexes, run queries and benchmarks.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 recall
//! target not reached.

mod bench;
mod commands;
mod strategy;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "hqi", version, about = "Workload-aware hybrid vector search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset and workload from a JSON spec file.
    Gen(commands::GenArgs),
    /// Build an index directory for one strategy.
    Build(commands::BuildArgs),
    /// Answer a workload with a saved index.
    Query(commands::QueryArgs),
    /// Compare strategies on one dataset and workload.
    Bench(bench::BenchArgs),
}

/// A bad flag or flag combination noticed after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// How a successful command finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    TargetMissed,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(args) => commands::gen(args),
        Command::Build(args) => commands::build(args),
        Command::Query(args) => commands::query(args),
        Command::Bench(args) => bench::run(args),
    };
    match result {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::TargetMissed) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.downcast_ref::<UsageError>().is_some() { 1 } else { 2 })
        }
    }
}
