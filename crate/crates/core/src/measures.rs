//! Spherical and α-stable Lévy measures, modulated models and their scalar
//! functionals.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{CoreError, Result};
use crate::linalg::{self, Mat};

const UNIT_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;
const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub direction: Vec<f64>,
    pub weight: f64,
}

/// Finite measure on the unit sphere of R^d.
///
/// Zero total mass is allowed; it represents the absence of jumps.
#[derive(Debug, Clone, PartialEq)]
pub enum SphericalMeasure {
    Atoms { dim: usize, atoms: Vec<Atom> },
    Isotropic { dim: usize, mass: f64 },
}

/// `E|θ₁|^p` for θ uniform on the unit sphere of R^d.
pub fn sphere_abs_moment(d: usize, p: f64) -> f64 {
    let d = d as f64;
    (ln_gamma(d / 2.0) + ln_gamma((p + 1.0) / 2.0)
        - 0.5 * std::f64::consts::PI.ln()
        - ln_gamma((d + p) / 2.0))
        .exp()
}

/// Surface area of the unit sphere in R^d.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * (h * std::f64::consts::PI.ln() - ln_gamma(h)).exp()
}

impl SphericalMeasure {
    pub fn atoms(dim: usize, atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        let s = SphericalMeasure::Atoms {
            dim,
            atoms: atoms
                .into_iter()
                .map(|(direction, weight)| Atom { direction, weight })
                .collect(),
        };
        s.validate()?;
        Ok(s)
    }

    /// Atoms at ±e_i with the given weight on each of the 2d points.
    pub fn axes(dim: usize, weight: f64) -> Self {
        let mut atoms = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut e = vec![0.0; dim];
                e[i] = sign;
                atoms.push(Atom {
                    direction: e,
                    weight,
                });
            }
        }
        SphericalMeasure::Atoms { dim, atoms }
    }

    pub fn isotropic(dim: usize, mass: f64) -> Result<Self> {
        let s = SphericalMeasure::Isotropic { dim, mass };
        s.validate()?;
        Ok(s)
    }

    pub fn zero(dim: usize) -> Self {
        SphericalMeasure::Atoms {
            dim,
            atoms: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SphericalMeasure::Atoms { dim, atoms } => {
                if *dim == 0 {
                    return Err(CoreError::InvalidInput("dimension must be positive".into()));
                }
                for a in atoms {
                    if a.direction.len() != *dim {
                        return Err(CoreError::InvalidInput(format!(
                            "atom direction has length {} but dim is {}",
                            a.direction.len(),
                            dim
                        )));
                    }
                    let n = linalg::norm(&a.direction);
                    if (n - 1.0).abs() > UNIT_TOL {
                        return Err(CoreError::InvalidInput(format!(
                            "atom direction {:?} has norm {n}",
                            a.direction
                        )));
                    }
                    if !(a.weight >= 0.0) || !a.weight.is_finite() {
                        return Err(CoreError::InvalidInput(format!(
                            "atom weight {} must be finite and nonnegative",
                            a.weight
                        )));
                    }
                }
                Ok(())
            }
            SphericalMeasure::Isotropic { dim, mass } => {
                if *dim == 0 {
                    return Err(CoreError::InvalidInput("dimension must be positive".into()));
                }
                if !(*mass >= 0.0) || !mass.is_finite() {
                    return Err(CoreError::InvalidInput(format!(
                        "isotropic mass {mass} must be finite and nonnegative"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SphericalMeasure::Atoms { dim, .. } | SphericalMeasure::Isotropic { dim, .. } => *dim,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            SphericalMeasure::Atoms { atoms, .. } => atoms.iter().map(|a| a.weight).sum(),
            SphericalMeasure::Isotropic { mass, .. } => *mass,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        match self {
            SphericalMeasure::Atoms { dim, atoms } => SphericalMeasure::Atoms {
                dim: *dim,
                atoms: atoms
                    .iter()
                    .map(|a| Atom {
                        direction: a.direction.clone(),
                        weight: a.weight * c,
                    })
                    .collect(),
            },
            SphericalMeasure::Isotropic { dim, mass } => SphericalMeasure::Isotropic {
                dim: *dim,
                mass: mass * c,
            },
        }
    }

    /// Apply an orthogonal matrix to every atom. Isotropic measures are unchanged.
    pub fn rotated(&self, q: &Mat) -> Self {
        match self {
            SphericalMeasure::Atoms { dim, atoms } => SphericalMeasure::Atoms {
                dim: *dim,
                atoms: atoms
                    .iter()
                    .map(|a| {
                        let mut v = linalg::mat_vec(q, &a.direction);
                        let n = linalg::norm(&v);
                        v.iter_mut().for_each(|x| *x /= n);
                        Atom {
                            direction: v,
                            weight: a.weight,
                        }
                    })
                    .collect(),
            },
            iso => iso.clone(),
        }
    }

    /// `∫ θ Σ(dθ)`.
    pub fn first_moment(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        if let SphericalMeasure::Atoms { atoms, .. } = self {
            for a in atoms {
                linalg::axpy(a.weight, &a.direction, &mut m);
            }
        }
        m
    }

    /// Atoms grouped into antipodal pairs with equal weights, one entry per
    /// pair. `None` if the measure is not of that form.
    pub fn symmetric_pairs(&self) -> Option<Vec<(Vec<f64>, f64)>> {
        let SphericalMeasure::Atoms { atoms, .. } = self else {
            return None;
        };
        let mut used = vec![false; atoms.len()];
        let mut pairs = Vec::new();
        for i in 0..atoms.len() {
            if used[i] || atoms[i].weight == 0.0 {
                used[i] = true;
                continue;
            }
            used[i] = true;
            let found = (0..atoms.len()).find(|&j| {
                !used[j]
                    && atoms[i]
                        .direction
                        .iter()
                        .zip(&atoms[j].direction)
                        .all(|(a, b)| (a + b).abs() <= MATCH_TOL)
                    && (atoms[i].weight - atoms[j].weight).abs()
                        <= SYMMETRY_TOL * atoms[i].weight.max(1.0)
            })?;
            used[found] = true;
            pairs.push((atoms[i].direction.clone(), atoms[i].weight));
        }
        Some(pairs)
    }

    /// Symmetric under θ ↦ −θ: antipodal atom pairs with equal weights, or isotropic.
    pub fn is_symmetric(&self) -> bool {
        match self {
            SphericalMeasure::Isotropic { .. } => true,
            SphericalMeasure::Atoms { .. } => self.symmetric_pairs().is_some(),
        }
    }

    /// `∫ |v·θ|^p Σ(dθ)`.
    pub fn abs_power_integral(&self, v: &[f64], p: f64) -> f64 {
        match self {
            SphericalMeasure::Atoms { atoms, .. } => atoms
                .iter()
                .map(|a| a.weight * linalg::dot(v, &a.direction).abs().powf(p))
                .sum(),
            SphericalMeasure::Isotropic { dim, mass } => {
                let n = linalg::norm(v);
                if n == 0.0 {
                    0.0
                } else {
                    mass * n.powf(p) * sphere_abs_moment(*dim, p)
                }
            }
        }
    }
}

/// Result of the α = 1 symmetry check.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryCheck {
    pub residual: Vec<f64>,
    pub symmetric: bool,
}

pub fn check_alpha1_symmetry(spherical: &SphericalMeasure) -> SymmetryCheck {
    let residual = spherical.first_moment();
    let symmetric = linalg::norm(&residual) <= SYMMETRY_TOL;
    SymmetryCheck {
        residual,
        symmetric,
    }
}

/// The α-stable Lévy measure `ν(Γ) = ∫₀^∞ ∫ 1_Γ(rθ) Σ(dθ) r^{-1-α} dr`.
#[derive(Debug, Clone, PartialEq)]
pub struct StableMeasure {
    pub alpha: f64,
    pub spherical: SphericalMeasure,
}

impl StableMeasure {
    pub fn new(alpha: f64, spherical: SphericalMeasure) -> Result<Self> {
        let m = StableMeasure { alpha, spherical };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 2.0) {
            return Err(CoreError::InvalidInput(format!(
                "alpha = {} must lie in (0, 2)",
                self.alpha
            )));
        }
        self.spherical.validate()?;
        if self.alpha == 1.0 && !check_alpha1_symmetry(&self.spherical).symmetric {
            return Err(CoreError::InvalidInput(
                "alpha = 1 requires ∫θ Σ(dθ) = 0".into(),
            ));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.spherical.dim()
    }

    pub fn total_mass(&self) -> f64 {
        self.spherical.total_mass()
    }

    pub fn scaled(&self, c: f64) -> Self {
        StableMeasure {
            alpha: self.alpha,
            spherical: self.spherical.scaled(c),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.spherical.is_symmetric()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("measure serialization")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StableMeasureJson {
    dim: usize,
    alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    atoms: Option<Vec<(Vec<f64>, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    isotropic: Option<f64>,
}

impl Serialize for StableMeasure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let j = match &self.spherical {
            SphericalMeasure::Atoms { dim, atoms } => StableMeasureJson {
                dim: *dim,
                alpha: self.alpha,
                atoms: Some(
                    atoms
                        .iter()
                        .map(|a| (a.direction.clone(), a.weight))
                        .collect(),
                ),
                isotropic: None,
            },
            SphericalMeasure::Isotropic { dim, mass } => StableMeasureJson {
                dim: *dim,
                alpha: self.alpha,
                atoms: None,
                isotropic: Some(*mass),
            },
        };
        j.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StableMeasure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let j = StableMeasureJson::deserialize(d)?;
        let spherical = match (j.atoms, j.isotropic) {
            (Some(atoms), None) => SphericalMeasure::Atoms {
                dim: j.dim,
                atoms: atoms
                    .into_iter()
                    .map(|(direction, weight)| Atom { direction, weight })
                    .collect(),
            },
            (None, Some(mass)) => SphericalMeasure::Isotropic { dim: j.dim, mass },
            _ => {
                return Err(D::Error::custom(
                    "measure needs exactly one of \"atoms\" or \"isotropic\"",
                ))
            }
        };
        StableMeasure::new(j.alpha, spherical).map_err(D::Error::custom)
    }
}

/// `∫_{|y| ≤ radius} |y|^power ν(dy)`.
pub fn truncated_moment(measure: &StableMeasure, radius: f64, power: f64) -> Result<f64> {
    if power <= measure.alpha {
        return Err(CoreError::DivergentIntegral(format!(
            "∫|y|^{power} ν(dy) diverges near 0 for alpha = {}",
            measure.alpha
        )));
    }
    if !(radius >= 0.0) {
        return Err(CoreError::InvalidInput(format!("radius {radius} < 0")));
    }
    if radius == 0.0 {
        return Ok(0.0);
    }
    Ok(measure.total_mass() * radius.powf(power - measure.alpha) / (power - measure.alpha))
}

/// `ν(|y| > radius)`.
pub fn tail_mass(measure: &StableMeasure, radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(CoreError::InvalidInput(format!(
            "tail mass needs radius > 0, got {radius}"
        )));
    }
    if radius.is_infinite() {
        return Ok(0.0);
    }
    Ok(measure.total_mass() * radius.powf(-measure.alpha) / measure.alpha)
}

/// Sufficient test for `nu1 ≤ nu2` as measures.
pub fn dominates(nu1: &StableMeasure, nu2: &StableMeasure) -> Result<bool> {
    if nu1.alpha != nu2.alpha {
        return Err(CoreError::InvalidInput(format!(
            "domination needs equal alpha, got {} and {}",
            nu1.alpha, nu2.alpha
        )));
    }
    if nu1.dim() != nu2.dim() {
        return Err(CoreError::DimensionMismatch {
            expected: nu1.dim(),
            found: nu2.dim(),
        });
    }
    match (&nu1.spherical, &nu2.spherical) {
        (SphericalMeasure::Isotropic { mass: a, .. }, SphericalMeasure::Isotropic { mass: b, .. }) => {
            Ok(a <= b)
        }
        (SphericalMeasure::Atoms { atoms: a1, .. }, SphericalMeasure::Atoms { atoms: a2, .. }) => {
            let mut all = true;
            for a in a1.iter().filter(|a| a.weight > 0.0) {
                let matched: f64 = a2
                    .iter()
                    .filter(|b| {
                        a.direction
                            .iter()
                            .zip(&b.direction)
                            .all(|(x, y)| (x - y).abs() <= MATCH_TOL)
                    })
                    .map(|b| b.weight)
                    .sum();
                let present = a2.iter().any(|b| {
                    a.direction
                        .iter()
                        .zip(&b.direction)
                        .all(|(x, y)| (x - y).abs() <= MATCH_TOL)
                });
                if !present {
                    return Err(CoreError::Undecidable(format!(
                        "atom {:?} of the first measure is not an atom of the second",
                        a.direction
                    )));
                }
                if a.weight > matched {
                    all = false;
                }
            }
            Ok(all)
        }
        _ => Err(CoreError::Undecidable(
            "cannot compare an atomic spherical measure with an isotropic one".into(),
        )),
    }
}

fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    for _ in 0..iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[n].1 - simplex[0].1;
        let size = simplex
            .iter()
            .skip(1)
            .map(|(x, _)| {
                x.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread.abs() < 1e-16 && size < 1e-12 {
            break;
        }
        let mut c = vec![0.0; n];
        for (x, _) in simplex.iter().take(n) {
            linalg::axpy(1.0 / n as f64, x, &mut c);
        }
        let along = |t: f64| -> Vec<f64> {
            c.iter()
                .zip(&simplex[n].0)
                .map(|(ci, wi)| ci + t * (ci - wi))
                .collect()
        };
        let xr = along(1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = f(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let xc = if fr < simplex[n].1 { along(0.5) } else { along(-0.5) };
            let fc = f(&xc);
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = s.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    let fx = f(&x);
                    *s = (x, fx);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = linalg::norm(v);
    if n < 1e-300 || !n.is_finite() {
        None
    } else {
        Some(v.iter().map(|x| x / n).collect())
    }
}

fn sphere_candidates(d: usize, atoms: &[Atom]) -> Vec<Vec<f64>> {
    let mut pts = Vec::new();
    match d {
        1 => pts.push(vec![1.0]),
        2 => {
            let n = 4096;
            for k in 0..n {
                let phi = std::f64::consts::TAU * k as f64 / n as f64;
                pts.push(vec![phi.cos(), phi.sin()]);
            }
            for a in atoms {
                pts.push(vec![-a.direction[1], a.direction[0]]);
            }
        }
        3 => {
            let n = 16384;
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            for k in 0..n {
                let z = 1.0 - (2.0 * k as f64 + 1.0) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let phi = golden * k as f64;
                pts.push(vec![r * phi.cos(), r * phi.sin(), z]);
            }
            let m = atoms.len().min(200);
            for i in 0..m {
                for j in i + 1..m {
                    let (a, b) = (&atoms[i].direction, &atoms[j].direction);
                    let c = [
                        a[1] * b[2] - a[2] * b[1],
                        a[2] * b[0] - a[0] * b[2],
                        a[0] * b[1] - a[1] * b[0],
                    ];
                    if let Some(u) = unit(&c) {
                        pts.push(u);
                    }
                }
            }
        }
        _ => {
            // Kronecker lattice with generalized golden-ratio steps, mapped
            // to the sphere through the Gaussian quantile.
            let mut phi = 2.0f64;
            for _ in 0..50 {
                phi = (1.0 + phi).powf(1.0 / (d as f64 + 1.0));
            }
            let steps: Vec<f64> = (1..=d).map(|k| (1.0 / phi).powi(k as i32).fract()).collect();
            let n = 4096 * d;
            let normal = statrs::distribution::Normal::standard();
            use statrs::distribution::ContinuousCDF;
            for k in 1..=n {
                let v: Vec<f64> = steps
                    .iter()
                    .map(|s| normal.inverse_cdf((0.5 + s * k as f64).fract().clamp(1e-12, 1.0 - 1e-12)))
                    .collect();
                if let Some(u) = unit(&v) {
                    pts.push(u);
                }
            }
            for i in 0..d {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                pts.push(e);
            }
        }
    }
    pts
}

/// `inf_{|θ₀|=1} ∫ |θ₀·θ|^α Σ(dθ)`, by grid search and Nelder–Mead refinement.
pub fn nondegeneracy_constant(spherical: &SphericalMeasure, alpha: f64) -> Result<f64> {
    Ok(nondegeneracy_minimizer(spherical, alpha)?.0)
}

/// Like [`nondegeneracy_constant`], also returning the minimizing direction.
pub fn nondegeneracy_minimizer(spherical: &SphericalMeasure, alpha: f64) -> Result<(f64, Vec<f64>)> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(CoreError::InvalidInput(format!("alpha = {alpha} must lie in (0, 2)")));
    }
    spherical.validate()?;
    let d = spherical.dim();
    let atoms = match spherical {
        SphericalMeasure::Isotropic { mass, .. } => {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            return Ok((mass * sphere_abs_moment(d, alpha), e));
        }
        SphericalMeasure::Atoms { atoms, .. } => atoms,
    };
    let objective = |v: &[f64]| -> f64 {
        match unit(v) {
            Some(u) => spherical.abs_power_integral(&u, alpha),
            None => f64::INFINITY,
        }
    };
    let cands = sphere_candidates(d, atoms);
    let mut scored: Vec<(f64, usize)> = cands
        .iter()
        .enumerate()
        .map(|(i, c)| (spherical.abs_power_integral(c, alpha), i))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = (scored[0].0, cands[scored[0].1].clone());
    if d == 1 {
        return Ok(best);
    }
    let step = match d {
        2 => std::f64::consts::TAU / 4096.0,
        3 => 0.03,
        _ => 0.1,
    };
    for &(_, idx) in scored.iter().take(6) {
        let (x, fx) = nelder_mead(&objective, &cands[idx], step, 400 * d);
        if fx < best.0 {
            if let Some(u) = unit(&x) {
                best = (fx, u);
            }
        }
    }
    Ok((best.0.max(0.0), best.1))
}

pub type ScalarFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(f64, &[f64]) -> Mat + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Scalar coefficient `m(t, x)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScalarField {
    Constant { value: f64 },
    /// `base + amplitude · sin(x[axis])`
    Sin { base: f64, amplitude: f64, axis: usize },
    #[serde(skip)]
    Custom { f: ScalarFn, lo: f64, hi: f64 },
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Constant { value } => write!(f, "Constant({value})"),
            ScalarField::Sin { base, amplitude, axis } => {
                write!(f, "Sin({base} + {amplitude} sin x{axis})")
            }
            ScalarField::Custom { lo, hi, .. } => write!(f, "Custom([{lo}, {hi}])"),
        }
    }
}

impl ScalarField {
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            ScalarField::Constant { value } => *value,
            ScalarField::Sin { base, amplitude, axis } => base + amplitude * x[*axis].sin(),
            ScalarField::Custom { f, .. } => f(t, x),
        }
    }

    /// Declared range.
    pub fn range(&self) -> (f64, f64) {
        match self {
            ScalarField::Constant { value } => (*value, *value),
            ScalarField::Sin { base, amplitude, .. } => (base - amplitude.abs(), base + amplitude.abs()),
            ScalarField::Custom { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, ScalarField::Constant { .. })
    }

    pub fn is_time_homogeneous(&self) -> bool {
        !matches!(self, ScalarField::Custom { .. })
    }
}

/// Matrix coefficient `σ(t, x)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MatrixField {
    Constant { rows: Vec<Vec<f64>> },
    /// `diag(diag) + amplitude · sin(x[axis]) e_axis e_axisᵀ`
    DiagSin { diag: Vec<f64>, amplitude: f64, axis: usize },
    /// `(1 + min(|x|^γ, 1)) · I`
    HolderRadial { dim: usize, gamma: f64 },
    /// `(1 + g_ε(x₁)) · I` where `g_ε` is the Gaussian mollification at scale ε
    /// of `min(|x₁|^γ, 1)`.
    Mollified { dim: usize, gamma: f64, eps: f64 },
    #[serde(skip)]
    Custom { f: MatrixFn, dim: usize },
}

impl fmt::Debug for MatrixField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixField::Constant { rows } => write!(f, "Constant({rows:?})"),
            MatrixField::DiagSin { diag, amplitude, axis } => {
                write!(f, "DiagSin({diag:?}, {amplitude}, {axis})")
            }
            MatrixField::HolderRadial { dim, gamma } => write!(f, "HolderRadial(d={dim}, γ={gamma})"),
            MatrixField::Mollified { dim, gamma, eps } => {
                write!(f, "Mollified(d={dim}, γ={gamma}, ε={eps})")
            }
            MatrixField::Custom { dim, .. } => write!(f, "Custom(d={dim})"),
        }
    }
}

fn holder_profile(s: f64, gamma: f64) -> f64 {
    s.abs().powf(gamma).min(1.0)
}

fn holder_profile_grad(s: f64, gamma: f64) -> f64 {
    let a = s.abs();
    if a >= 1.0 || a == 0.0 {
        if a == 0.0 && gamma < 1.0 {
            f64::INFINITY
        } else if a == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        gamma * a.powf(gamma - 1.0)
    }
}

static GH_NODES: std::sync::OnceLock<(Vec<f64>, Vec<f64>)> = std::sync::OnceLock::new();

/// Legendre nodes on [-6, 6] with Gaussian weights, enough for smooth
/// mollifier averages.
fn mollifier_rule() -> &'static (Vec<f64>, Vec<f64>) {
    GH_NODES.get_or_init(|| {
        let (x, w) = crate::quad::gauss_legendre(96);
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let nodes: Vec<f64> = x.iter().map(|u| 6.0 * u).collect();
        let weights: Vec<f64> = x
            .iter()
            .zip(&w)
            .map(|(u, wi)| 6.0 * wi * (-(6.0 * u) * (6.0 * u) / 2.0).exp() / norm)
            .collect();
        (nodes, weights)
    })
}

fn mollified_profile(s: f64, gamma: f64, eps: f64) -> (f64, f64) {
    let (z, w) = mollifier_rule();
    let mut v = 0.0;
    let mut dv = 0.0;
    for (zi, wi) in z.iter().zip(w) {
        let u = s - eps * zi;
        v += wi * holder_profile(u, gamma);
        // derivative of the convolution moves onto the Gaussian kernel
        dv -= wi * holder_profile(u, gamma) * zi / eps;
    }
    (v, dv)
}

impl MatrixField {
    pub fn identity(d: usize) -> Self {
        MatrixField::Constant {
            rows: linalg::to_rows(&linalg::identity(d)),
        }
    }

    pub fn constant(m: &Mat) -> Self {
        MatrixField::Constant {
            rows: linalg::to_rows(m),
        }
    }

    pub fn zero(d: usize) -> Self {
        MatrixField::Constant {
            rows: vec![vec![0.0; d]; d],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            MatrixField::Constant { rows } => rows.len(),
            MatrixField::DiagSin { diag, .. } => diag.len(),
            MatrixField::HolderRadial { dim, .. }
            | MatrixField::Mollified { dim, .. }
            | MatrixField::Custom { dim, .. } => *dim,
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Mat {
        match self {
            MatrixField::Constant { rows } => linalg::from_rows(rows),
            MatrixField::DiagSin { diag, amplitude, axis } => {
                let mut m = linalg::diag(diag);
                m[(*axis, *axis)] += amplitude * x[*axis].sin();
                m
            }
            MatrixField::HolderRadial { dim, gamma } => {
                linalg::identity(*dim) * (1.0 + holder_profile(linalg::norm(x), *gamma))
            }
            MatrixField::Mollified { dim, gamma, eps } => {
                linalg::identity(*dim) * (1.0 + mollified_profile(x[0], *gamma, *eps).0)
            }
            MatrixField::Custom { f, .. } => f(t, x),
        }
    }

    /// The constant matrix, if the field does not depend on (t, x).
    pub fn as_constant(&self) -> Option<Mat> {
        match self {
            MatrixField::Constant { rows } => Some(linalg::from_rows(rows)),
            _ => None,
        }
    }

    pub fn is_time_homogeneous(&self) -> bool {
        !matches!(self, MatrixField::Custom { .. })
    }

    /// Frobenius norm of the spatial gradient where it is known in closed form.
    pub fn grad_norm(&self, x: &[f64]) -> Option<f64> {
        match self {
            MatrixField::Constant { .. } => Some(0.0),
            MatrixField::DiagSin { amplitude, axis, .. } => Some((amplitude * x[*axis].cos()).abs()),
            MatrixField::HolderRadial { dim, gamma } => {
                Some((*dim as f64).sqrt() * holder_profile_grad(linalg::norm(x), *gamma))
            }
            MatrixField::Mollified { dim, gamma, eps } => {
                Some((*dim as f64).sqrt() * mollified_profile(x[0], *gamma, *eps).1.abs())
            }
            MatrixField::Custom { .. } => None,
        }
    }
}

/// Vector coefficient `b(t, x)`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VectorField {
    Constant { value: Vec<f64> },
    #[serde(skip)]
    Custom { f: VectorFn, dim: usize },
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VectorField::Constant { value } => write!(f, "Constant({value:?})"),
            VectorField::Custom { dim, .. } => write!(f, "Custom(d={dim})"),
        }
    }
}

impl VectorField {
    pub fn zero(d: usize) -> Self {
        VectorField::Constant { value: vec![0.0; d] }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> Vec<f64> {
        match self {
            VectorField::Constant { value } => value.clone(),
            VectorField::Custom { f, .. } => f(t, x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, VectorField::Constant { value } if value.iter().all(|v| *v == 0.0))
    }

    pub fn is_time_homogeneous(&self) -> bool {
        !matches!(self, VectorField::Custom { .. })
    }
}

/// Lower-order part: `ν̄` with exponent β < α, its matrix `σ̄` and the drift `b̄`
/// (the drift only enters for α ∈ (1, 2)).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerOrder {
    pub nu_bar: StableMeasure,
    pub sigma_bar: MatrixField,
    pub b_bar: VectorField,
}

impl LowerOrder {
    pub fn beta(&self) -> f64 {
        self.nu_bar.alpha
    }
}

/// State-dependent model `ν_{t,x} = m(t,x)·base`, `σ(t,x)`, `b(t,x)` plus an
/// optional lower-order part.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModel {
    pub base: StableMeasure,
    pub m_min: f64,
    pub m_max: f64,
    pub modulation: ScalarField,
    pub sigma: MatrixField,
    pub drift: VectorField,
    #[serde(default)]
    pub lower_order: Option<LowerOrder>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBounds {
    pub min_singular_value: f64,
    pub sup_sigma: f64,
    pub sup_sigma_bar: f64,
    pub sup_drift: f64,
    pub sup_drift_bar: f64,
    pub m_observed: (f64, f64),
}

impl LevyModel {
    /// Constant coefficients: `ν = base`, `σ` fixed, no drift, no lower order.
    pub fn constant(base: StableMeasure, sigma: Mat) -> Self {
        let d = base.dim();
        LevyModel {
            base,
            m_min: 1.0,
            m_max: 1.0,
            modulation: ScalarField::Constant { value: 1.0 },
            sigma: MatrixField::constant(&sigma),
            drift: VectorField::zero(d),
            lower_order: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn alpha(&self) -> f64 {
        self.base.alpha
    }

    /// `ν_{t,x}` as a stable measure.
    pub fn nu_at(&self, t: f64, x: &[f64]) -> StableMeasure {
        self.base.scaled(self.modulation.eval(t, x))
    }

    pub fn is_time_homogeneous(&self) -> bool {
        self.modulation.is_time_homogeneous()
            && self.sigma.is_time_homogeneous()
            && self.drift.is_time_homogeneous()
            && self
                .lower_order
                .as_ref()
                .is_none_or(|l| l.sigma_bar.is_time_homogeneous() && l.b_bar.is_time_homogeneous())
    }

    pub fn has_constant_coefficients(&self) -> bool {
        self.modulation.is_constant()
            && self.sigma.as_constant().is_some()
            && matches!(self.drift, VectorField::Constant { .. })
    }

    /// Structural checks plus probes of the coefficient bounds.
    pub fn validate(&self, probes: &[(f64, Vec<f64>)]) -> Result<ModelBounds> {
        self.base.validate()?;
        let d = self.dim();
        if !(self.m_min > 0.0) || self.m_max < self.m_min {
            return Err(CoreError::InvalidInput(format!(
                "need 0 < m_min ≤ m_max, got {} and {}",
                self.m_min, self.m_max
            )));
        }
        let (lo, hi) = self.modulation.range();
        if lo < self.m_min - 1e-12 || hi > self.m_max + 1e-12 {
            return Err(CoreError::InvalidInput(format!(
                "modulation range [{lo}, {hi}] not inside [{}, {}]",
                self.m_min, self.m_max
            )));
        }
        if self.sigma.dim() != d {
            return Err(CoreError::DimensionMismatch {
                expected: d,
                found: self.sigma.dim(),
            });
        }
        if let Some(l) = &self.lower_order {
            l.nu_bar.validate()?;
            if !(l.beta() < self.alpha()) {
                return Err(CoreError::InvalidInput(format!(
                    "lower-order exponent {} must be below alpha = {}",
                    l.beta(),
                    self.alpha()
                )));
            }
            if l.nu_bar.dim() != d || l.sigma_bar.dim() != d {
                return Err(CoreError::DimensionMismatch {
                    expected: d,
                    found: l.nu_bar.dim(),
                });
            }
        }
        let mut b = ModelBounds {
            min_singular_value: f64::INFINITY,
            sup_sigma: 0.0,
            sup_sigma_bar: 0.0,
            sup_drift: 0.0,
            sup_drift_bar: 0.0,
            m_observed: (f64::INFINITY, f64::NEG_INFINITY),
        };
        for (t, x) in probes {
            let m = self.modulation.eval(*t, x);
            if m < self.m_min - 1e-12 || m > self.m_max + 1e-12 || !m.is_finite() {
                return Err(CoreError::InvalidInput(format!(
                    "m({t}, {x:?}) = {m} outside [{}, {}]",
                    self.m_min, self.m_max
                )));
            }
            b.m_observed = (b.m_observed.0.min(m), b.m_observed.1.max(m));
            let s = self.sigma.eval(*t, x);
            b.min_singular_value = b.min_singular_value.min(linalg::min_singular_value(&s));
            b.sup_sigma = b.sup_sigma.max(linalg::operator_norm(&s));
            b.sup_drift = b.sup_drift.max(linalg::norm(&self.drift.eval(*t, x)));
            if let Some(l) = &self.lower_order {
                b.sup_sigma_bar = b.sup_sigma_bar.max(linalg::operator_norm(&l.sigma_bar.eval(*t, x)));
                b.sup_drift_bar = b.sup_drift_bar.max(linalg::norm(&l.b_bar.eval(*t, x)));
            }
        }
        if !(b.min_singular_value > 0.0) && !probes.is_empty() {
            return Err(CoreError::InvalidInput(
                "sigma is not uniformly nondegenerate on the probes".into(),
            ));
        }
        let finite = [b.sup_sigma, b.sup_sigma_bar, b.sup_drift, b.sup_drift_bar]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CoreError::InvalidInput("unbounded coefficient on the probes".into()));
        }
        Ok(b)
    }
}

/// Largest observed `|m(x) − m(x')| / |x − x'|^γ` over probe pairs. A
/// diagnostic only; no bound is enforced.
pub fn modulation_holder_diagnostic(model: &LevyModel, gamma: f64, t: f64, probes: &[Vec<f64>]) -> f64 {
    let mut best: f64 = 0.0;
    for i in 0..probes.len() {
        for j in i + 1..probes.len() {
            let dx: Vec<f64> = probes[i].iter().zip(&probes[j]).map(|(a, b)| a - b).collect();
            let r = linalg::norm(&dx);
            if r == 0.0 {
                continue;
            }
            let dm = (model.modulation.eval(t, &probes[i]) - model.modulation.eval(t, &probes[j])).abs();
            best = best.max(dm / r.powf(gamma));
        }
    }
    best
}
