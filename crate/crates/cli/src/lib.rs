//! Batch experiment runner for the `stablelike` crate.
//!
//! Every subcommand reads a strict JSON config, computes everything in
//! memory and only then writes its artifacts, so configuration errors
//! leave the output directory untouched.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use commands::Subcommand;
pub use output::{Check, Outcome, Table};

/// Exit status: 0 when every check passed, 1 on a failed check or runtime
/// error, 2 on a configuration error.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Failure(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "configuration error: {m}"),
            RunError::Failure(m) => write!(f, "run failed: {m}"),
        }
    }
}

impl From<stablelike::CoreError> for RunError {
    fn from(e: stablelike::CoreError) -> Self {
        use stablelike::CoreError::*;
        match e {
            InvalidInput(_)
            | InvalidConfiguration(_)
            | DimensionMismatch { .. }
            | UnsupportedConfiguration(_)
            | InvalidSymbol { .. }
            | Domain(_) => RunError::Config(e.to_string()),
            _ => RunError::Failure(e.to_string()),
        }
    }
}

pub struct Invocation {
    pub subcommand: Subcommand,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: usize,
    pub out: PathBuf,
}

/// Parse and execute in memory. `base_dir` resolves relative file inputs.
pub fn execute(sub: Subcommand, raw: Option<&str>, base_dir: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    commands::dispatch(sub, raw, base_dir, seed)
}

fn read_config(path: &Option<PathBuf>) -> Result<(Option<String>, PathBuf), RunError> {
    match path {
        None => Ok((None, PathBuf::from("."))),
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| RunError::Config(format!("cannot read {}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
            Ok((Some(raw), base))
        }
    }
}

/// Full command-line run: config, computation, artifacts, exit code.
pub fn run(inv: &Invocation) -> i32 {
    let start = Instant::now();
    let (raw, base) = match read_config(&inv.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(inv.jobs.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("configuration error: thread pool: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = pool.install(|| execute(inv.subcommand, raw.as_deref(), &base, inv.seed));
    let manifest_base = output::ManifestBase {
        subcommand: inv.subcommand.name().to_string(),
        config_path: inv.config.as_ref().map(|p| p.display().to_string()),
        config_sha256: raw.as_deref().map(output::sha256_hex),
        jobs: inv.jobs,
    };
    match result {
        Err(RunError::Config(m)) => {
            eprintln!("configuration error: {m}");
            EXIT_CONFIG
        }
        Err(RunError::Failure(m)) => {
            eprintln!("run failed: {m}");
            let wall = start.elapsed().as_secs_f64();
            if let Err(e) = output::write_failure(&inv.out, &manifest_base, inv.seed, &m, wall) {
                eprintln!("could not write manifest: {e}");
            }
            EXIT_FAIL
        }
        Ok(outcome) => {
            let all = outcome.all_passed();
            for c in &outcome.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let wall = start.elapsed().as_secs_f64();
            match output::write_outcome(&inv.out, &manifest_base, &outcome, wall) {
                Ok(()) => {
                    if all {
                        EXIT_OK
                    } else {
                        EXIT_FAIL
                    }
                }
                Err(e) => {
                    eprintln!("could not write artifacts: {e}");
                    EXIT_FAIL
                }
            }
        }
    }
}
