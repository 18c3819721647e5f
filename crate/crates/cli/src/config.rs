//! Strict config pieces shared by the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use stablelike::fixtures::{self, FixtureBody};
use stablelike::generator::TestFunction;
use stablelike::linalg::{self, Mat};
use stablelike::measures::{LevyModel, StableMeasure};
use stablelike::sampler::{DriverSpec, Scheme};
use stablelike::sde::CoefficientField;

use crate::RunError;

pub fn parse<T: DeserializeOwned>(raw: Option<&str>) -> Result<T, RunError> {
    let raw = raw.ok_or_else(|| RunError::Config("this subcommand needs --config".into()))?;
    serde_json::from_str(raw).map_err(|e| RunError::Config(e.to_string()))
}

pub fn bad(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

/// Seed from the command line, else from the config.
pub fn require_seed(cli: Option<u64>, cfg: Option<u64>) -> Result<u64, RunError> {
    cli.or(cfg)
        .ok_or_else(|| bad("a seed is required: pass --seed or set \"seed\" in the config"))
}

/// Named tolerance overrides; names outside the subcommand's list are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(transparent)]
pub struct Tolerances(pub BTreeMap<String, f64>);

impl Tolerances {
    pub fn resolve(&self, defaults: &[(&str, f64)]) -> Result<BTreeMap<String, f64>, RunError> {
        for (k, v) in &self.0 {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(bad(format!("tolerance {k:?} = {v} must be finite and ≥ 0")));
            }
            if !defaults.iter().any(|(n, _)| n == k) {
                let names: Vec<&str> = defaults.iter().map(|(n, _)| *n).collect();
                return Err(bad(format!("unknown tolerance {k:?} (known: {names:?})")));
            }
        }
        Ok(defaults
            .iter()
            .map(|(n, v)| (n.to_string(), *self.0.get(*n).unwrap_or(v)))
            .collect())
    }
}

/// A value given by fixture name, by a JSON file, or inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source<T> {
    Fixture(String),
    File(PathBuf),
    Inline(T),
}

pub trait FromFixture: Sized {
    fn from_fixture(body: &FixtureBody) -> Option<Self>;
}

impl FromFixture for StableMeasure {
    fn from_fixture(body: &FixtureBody) -> Option<Self> {
        match body {
            FixtureBody::Measure { measure } => Some(measure.clone()),
            FixtureBody::TwoDriver { driver, .. } => Some(driver.clone()),
            _ => None,
        }
    }
}

impl FromFixture for LevyModel {
    fn from_fixture(body: &FixtureBody) -> Option<Self> {
        match body {
            FixtureBody::Model { model } => Some(model.clone()),
            FixtureBody::Measure { measure } => Some(LevyModel::constant(measure.clone(), linalg::identity(measure.dim()))),
            _ => None,
        }
    }
}

impl FromFixture for CoefficientField {
    fn from_fixture(body: &FixtureBody) -> Option<Self> {
        match body {
            FixtureBody::Coefficient { field } => Some(field.clone()),
            FixtureBody::TwoDriver { sigma, .. } => Some(sigma.clone()),
            _ => None,
        }
    }
}

impl<T: DeserializeOwned + FromFixture + Clone> Source<T> {
    pub fn resolve(&self, base: &Path) -> Result<T, RunError> {
        match self {
            Source::Inline(v) => Ok(v.clone()),
            Source::Fixture(name) => {
                let f = fixtures::lookup(name).map_err(|e| bad(e.to_string()))?;
                T::from_fixture(&f.body).ok_or_else(|| bad(format!("fixture {name:?} does not provide the requested kind")))
            }
            Source::File(p) => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let raw = std::fs::read_to_string(&path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
                serde_json::from_str(&raw).map_err(|e| bad(format!("{}: {e}", path.display())))
            }
        }
    }
}

pub fn matrix(rows: &Option<Vec<Vec<f64>>>, d: usize) -> Result<Mat, RunError> {
    match rows {
        None => Ok(linalg::identity(d)),
        Some(r) => {
            if r.len() != d || r.iter().any(|row| row.len() != d) {
                return Err(bad(format!("sigma must be a {d}×{d} matrix")));
            }
            Ok(linalg::from_rows(r))
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverConfig {
    pub measure: Source<StableMeasure>,
    #[serde(default)]
    pub sigma: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub scheme: Scheme,
}

impl DriverConfig {
    pub fn build(&self, base: &Path) -> Result<(DriverSpec, StableMeasure, Mat), RunError> {
        let m = self.measure.resolve(base)?;
        m.validate()?;
        let s = matrix(&self.sigma, m.dim())?;
        Ok((DriverSpec::new(m.clone(), s.clone()).with_scheme(self.scheme), m, s))
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    Gaussian {
        center: Vec<f64>,
        width: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    Bump {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    PlaneWave {
        xi: Vec<f64>,
        #[serde(default)]
        phase: f64,
        #[serde(default = "one")]
        amp: f64,
    },
    Catalog {
        name: String,
        dim: usize,
    },
}

impl TestFunctionSpec {
    pub fn build(&self, d: usize) -> Result<TestFunction, RunError> {
        let f = match self {
            TestFunctionSpec::Gaussian { center, width, amp } => {
                if !(*width > 0.0) {
                    return Err(bad("gaussian width must be positive"));
                }
                TestFunction::gaussian(center.clone(), *width, *amp)
            }
            TestFunctionSpec::Bump { center, radius, amp } => {
                if !(*radius > 0.0) {
                    return Err(bad("bump radius must be positive"));
                }
                TestFunction::bump(center.clone(), *radius, *amp)
            }
            TestFunctionSpec::PlaneWave { xi, phase, amp } => TestFunction::plane_wave(xi.clone(), *phase, *amp),
            TestFunctionSpec::Catalog { name, dim } => TestFunction::from_catalog(name, *dim)?,
        };
        if f.dim != d {
            return Err(bad(format!("test function has dimension {}, model has {d}", f.dim)));
        }
        Ok(f)
    }
}

pub fn positive(name: &str, v: f64) -> Result<(), RunError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} = {v} must be positive and finite")))
    }
}

pub fn at_least(name: &str, v: usize, min: usize) -> Result<(), RunError> {
    if v >= min {
        Ok(())
    } else {
        Err(bad(format!("{name} = {v} must be at least {min}")))
    }
}
