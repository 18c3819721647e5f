//! Numerics for α-stable-like Lévy operators.
//!
//! The crate covers Lévy measures built from spherical measures, their
//! symbols, path samplers, quadrature for the nonlocal generator, Euler
//! schemes for jump SDEs, Monte Carlo checks of the martingale problem and
//! occupation estimates, a periodic spectral resolvent solver and a brute
//! force suite for a few elementary inequalities.

pub mod error;
pub mod fixtures;
pub mod generator;
pub mod inequalities;
pub mod io;
pub mod linalg;
pub mod measures;
pub mod pde;
pub mod quad;
pub mod rng;
pub mod sampler;
pub mod sde;
pub mod stats;
pub mod symbol;
pub mod verify;

pub use error::{CoreError, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
