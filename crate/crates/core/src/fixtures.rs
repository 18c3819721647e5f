//! Built-in configurations: measures, models, coefficient fields and test
//! functions, each with a JSON form.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::generator::TestFunction;
use crate::linalg;
use crate::measures::{LevyModel, LowerOrder, MatrixField, ScalarField, SphericalMeasure, StableMeasure, VectorField};
use crate::sde::{CoefficientField, Regularity};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FixtureBody {
    Measure {
        measure: StableMeasure,
    },
    Model {
        model: LevyModel,
    },
    /// `dX = σ(X₋) dL + σ̄(X₋) dL̄` with `L̄` of exponent `β < α`.
    TwoDriver {
        driver: StableMeasure,
        sigma: CoefficientField,
        driver_bar: StableMeasure,
        sigma_bar: CoefficientField,
    },
    Coefficient {
        field: CoefficientField,
    },
    TestFunction {
        name: String,
        dim: usize,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub name: String,
    pub description: String,
    pub body: FixtureBody,
}

impl Fixture {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fixtures serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: Fixture = serde_json::from_str(s).map_err(|e| CoreError::InvalidConfiguration(e.to_string()))?;
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.body {
            FixtureBody::Measure { measure } => measure.validate(),
            FixtureBody::Model { model } => model.validate(&[(0.0, vec![0.0; model.dim()])]).map(|_| ()),
            FixtureBody::TwoDriver {
                driver,
                sigma,
                driver_bar,
                sigma_bar,
            } => {
                driver.validate()?;
                driver_bar.validate()?;
                if driver_bar.alpha >= driver.alpha {
                    return Err(CoreError::InvalidConfiguration(format!(
                        "second driver exponent {} must be below {}",
                        driver_bar.alpha, driver.alpha
                    )));
                }
                let d = driver.dim();
                if driver_bar.dim() != d || sigma.dim() != d || sigma_bar.dim() != d {
                    return Err(CoreError::DimensionMismatch {
                        expected: d,
                        found: [driver_bar.dim(), sigma.dim(), sigma_bar.dim()].into_iter().find(|x| *x != d).unwrap_or(d),
                    });
                }
                Ok(())
            }
            FixtureBody::Coefficient { .. } => Ok(()),
            FixtureBody::TestFunction { name, dim } => TestFunction::from_catalog(name, *dim).map(|_| ()),
        }
    }

    pub fn measure(&self) -> Option<&StableMeasure> {
        match &self.body {
            FixtureBody::Measure { measure } => Some(measure),
            FixtureBody::Model { model } => Some(&model.base),
            FixtureBody::TwoDriver { driver, .. } => Some(driver),
            _ => None,
        }
    }
}

pub fn isotropic_stable(dim: usize, alpha: f64) -> Result<StableMeasure> {
    StableMeasure::new(alpha, SphericalMeasure::isotropic(dim, 1.0)?)
}

/// Unit atoms at `±e₁, ±e₂`.
pub fn cylindrical_2d(alpha: f64) -> Result<StableMeasure> {
    StableMeasure::new(alpha, SphericalMeasure::axes(2, 1.0))
}

fn fixture(name: &str, description: &str, body: FixtureBody) -> Fixture {
    Fixture {
        name: name.into(),
        description: description.into(),
        body,
    }
}

pub fn catalog() -> Vec<Fixture> {
    let iso = |d, a| isotropic_stable(d, a).expect("valid fixture");
    let mut out = vec![
        fixture(
            "isotropic-stable",
            "isotropic alpha-stable measure, d = 2, alpha = 1.5, unit spherical mass",
            FixtureBody::Measure { measure: iso(2, 1.5) },
        ),
        fixture(
            "isotropic-stable-1d",
            "symmetric alpha-stable measure on the line, alpha = 1.5",
            FixtureBody::Measure { measure: iso(1, 1.5) },
        ),
        fixture(
            "cylindrical-2d-axes",
            "cylindrical stable measure with unit atoms on the coordinate axes, alpha = 1.5",
            FixtureBody::Measure {
                measure: cylindrical_2d(1.5).expect("valid fixture"),
            },
        ),
        fixture(
            "modulated",
            "nu_x = m(x) nu with m(x) = 1 + 0.5 sin(x_1) on an isotropic base, d = 1, alpha = 1.5",
            FixtureBody::Model {
                model: LevyModel {
                    m_min: 0.5,
                    m_max: 1.5,
                    modulation: ScalarField::Sin {
                        base: 1.0,
                        amplitude: 0.5,
                        axis: 0,
                    },
                    ..LevyModel::constant(iso(1, 1.5), linalg::identity(1))
                },
            },
        ),
        fixture(
            "two-driver",
            "sigma(X) dL + sigma_bar(X) dL_bar with L isotropic alpha = 1.5 and L_bar isotropic beta = 0.8 < alpha, d = 1",
            FixtureBody::TwoDriver {
                driver: iso(1, 1.5),
                sigma: lipschitz_field(1),
                driver_bar: iso(1, 0.8),
                sigma_bar: CoefficientField::constant(&linalg::identity(1)),
            },
        ),
        fixture(
            "two-driver-model",
            "generator view of the two-driver setup: alpha = 1.5 base plus a beta = 0.8 lower-order part, d = 1",
            FixtureBody::Model {
                model: LevyModel {
                    lower_order: Some(LowerOrder {
                        nu_bar: iso(1, 0.8),
                        sigma_bar: MatrixField::identity(1),
                        b_bar: VectorField::zero(1),
                    }),
                    ..LevyModel::constant(iso(1, 1.5), linalg::identity(1))
                },
            },
        ),
        fixture(
            "lipschitz-sigma",
            "sigma(x) = diag(1) + 0.5 sin(x_1) e_1 e_1^T, Lipschitz with constant 0.5",
            FixtureBody::Coefficient { field: lipschitz_field(1) },
        ),
        fixture(
            "hoelder-sigma",
            "sigma(x) = (1 + min(|x|^0.5, 1)) I, Hoelder of order 0.5",
            FixtureBody::Coefficient {
                field: CoefficientField::new(
                    MatrixField::HolderRadial { dim: 1, gamma: 0.5 },
                    Regularity::Hoelder {
                        gamma: 0.5,
                        constant: 1.0,
                    },
                    2.0,
                    1.0,
                ),
            },
        ),
    ];
    for name in TestFunction::catalog_names() {
        out.push(fixture(
            &format!("test-function-{name}"),
            &format!("test function {name:?} centered at the origin, d = 1"),
            FixtureBody::TestFunction {
                name: name.to_string(),
                dim: 1,
            },
        ));
    }
    out
}

fn lipschitz_field(d: usize) -> CoefficientField {
    CoefficientField::new(
        MatrixField::DiagSin {
            diag: vec![1.0; d],
            amplitude: 0.5,
            axis: 0,
        },
        Regularity::Lipschitz { constant: 0.5 },
        1.5,
        0.5,
    )
}

pub fn lookup(name: &str) -> Result<Fixture> {
    catalog()
        .into_iter()
        .find(|f| f.name == name)
        .ok_or_else(|| CoreError::InvalidConfiguration(format!("unknown fixture {name:?}")))
}
