use std::path::PathBuf;

use clap::Parser;
use stablelike_cli::{run, Invocation, Subcommand};

/// Run a numerical experiment described by a JSON config.
#[derive(Debug, Parser)]
#[command(name = "stablelike", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Subcommand,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory; `STABLELIKE_OUT` overrides the default `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() {
    let a = Args::parse();
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let out = a
        .out
        .or_else(|| std::env::var_os("STABLELIKE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    let inv = Invocation {
        subcommand: a.subcommand,
        config: a.config,
        seed: a.seed,
        jobs,
        out,
    };
    std::process::exit(run(&inv));
}
