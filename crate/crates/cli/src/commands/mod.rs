//! One module per subcommand.

use std::path::Path;

use crate::output::Outcome;
use crate::RunError;

mod fixtures;
mod generator;
mod ineq;
mod mgp;
mod pde;
mod sample;
mod sde;
mod symbol;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Symbol,
    Sample,
    Generator,
    Sde,
    Uniqueness,
    MgpCheck,
    Krylov,
    Pde,
    IneqSuite,
    Fixtures,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::Symbol => "symbol",
            Subcommand::Sample => "sample",
            Subcommand::Generator => "generator",
            Subcommand::Sde => "sde",
            Subcommand::Uniqueness => "uniqueness",
            Subcommand::MgpCheck => "mgp-check",
            Subcommand::Krylov => "krylov",
            Subcommand::Pde => "pde",
            Subcommand::IneqSuite => "ineq-suite",
            Subcommand::Fixtures => "fixtures",
        }
    }
}

pub fn dispatch(sub: Subcommand, raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    match sub {
        Subcommand::Symbol => symbol::run(raw, base, seed),
        Subcommand::Sample => sample::run(raw, base, seed),
        Subcommand::Generator => generator::run(raw, base, seed),
        Subcommand::Sde => sde::run_sde(raw, base, seed),
        Subcommand::Uniqueness => sde::run_uniqueness(raw, base, seed),
        Subcommand::MgpCheck => mgp::run_mgp(raw, base, seed),
        Subcommand::Krylov => mgp::run_krylov(raw, base, seed),
        Subcommand::Pde => pde::run(raw, base, seed),
        Subcommand::IneqSuite => ineq::run(raw, base, seed),
        Subcommand::Fixtures => fixtures::run(raw, base, seed),
    }
}
