//! Lévy symbols `ψ(ξ) = ∫ (1 + i ξ·σy^{(α)} − e^{iξ·σy}) ν(dy)`.

use std::collections::HashMap;
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{self, Mat};
use crate::measures::{
    dominates, nondegeneracy_constant, sphere_abs_moment, LevyModel, SphericalMeasure, StableMeasure,
};
use crate::quad::{integrate_breaks, osc_power_tail, QuadOpts};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    Quadrature,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::Quadrature => "quadrature",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymbolEvaluation {
    pub xi: Vec<f64>,
    pub value: Complex64,
    pub method: Method,
    pub est_error: f64,
}

/// Which part of `y` enters the compensator `y^{(α)}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Compensation {
    /// `α < 1`: no compensation.
    None,
    /// `α = 1`: `y·1_{|y| ≤ 1}`.
    Truncated,
    /// `α ∈ (1, 2)`: `y`.
    Full,
}

impl Compensation {
    pub fn for_alpha(alpha: f64) -> Self {
        if alpha < 1.0 {
            Compensation::None
        } else if alpha == 1.0 {
            Compensation::Truncated
        } else {
            Compensation::Full
        }
    }

    /// Weight of the linear term at radius r.
    pub fn active(&self, r: f64) -> bool {
        match self {
            Compensation::None => false,
            Compensation::Truncated => r <= 1.0,
            Compensation::Full => true,
        }
    }
}

static K_CACHE: Mutex<Option<HashMap<u64, f64>>> = Mutex::new(None);

/// `K_α = ∫₀^∞ (1 − cos r) r^{−1−α} dr`.
///
/// Power series on [0, 1], adaptive Gauss–Kronrod on [1, 40] and an
/// integration-by-parts expansion of the tail.
pub fn radial_constant(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(CoreError::InvalidInput(format!("alpha = {alpha} must lie in (0, 2)")));
    }
    if let Some(v) = K_CACHE
        .lock()
        .unwrap()
        .as_ref()
        .and_then(|m| m.get(&alpha.to_bits()))
    {
        return Ok(*v);
    }
    let mut head = 0.0;
    let mut fact = 1.0;
    for k in 1..40 {
        let k2 = 2 * k;
        fact *= (k2 - 1) as f64 * k2 as f64;
        let term = 1.0 / (fact * (k2 as f64 - alpha));
        head += if k % 2 == 1 { term } else { -term };
        if term < 1e-20 {
            break;
        }
    }
    let r1 = 40.0;
    let mid = integrate_breaks(
        |r| (1.0 - r.cos()) * r.powf(-1.0 - alpha),
        &(0..=13).map(|k| 1.0 + 3.0 * k as f64).collect::<Vec<_>>(),
        QuadOpts::tol(1e-15, 1e-13),
    )
    .require("radial constant")?;
    let (osc, _) = osc_power_tail(1.0, r1, 1.0 + alpha)?;
    let tail = r1.powf(-alpha) / alpha - osc.re;
    let k = head + mid.value + tail;
    K_CACHE
        .lock()
        .unwrap()
        .get_or_insert_with(HashMap::new)
        .insert(alpha.to_bits(), k);
    Ok(k)
}

/// `∫₀^∞ (1 + i a r c(r) − e^{iar}) r^{−1−α} dr` for a scalar `a`, with an
/// error estimate. `c(r)` is the compensator indicator.
pub fn radial_integral(a: f64, alpha: f64, comp: Compensation) -> Result<(Complex64, f64)> {
    match comp {
        Compensation::Full if alpha <= 1.0 => {
            return Err(CoreError::DivergentIntegral(format!(
                "full compensation needs alpha > 1, got {alpha}"
            )))
        }
        Compensation::None if alpha >= 1.0 => {
            return Err(CoreError::DivergentIntegral(format!(
                "no compensation needs alpha < 1, got {alpha}"
            )))
        }
        _ => {}
    }
    if a == 0.0 {
        return Ok((Complex64::new(0.0, 0.0), 0.0));
    }
    let aa = a.abs();
    let h = (1.0 / aa).min(1.0);
    // series on [0, h], where |a r| ≤ 1
    let mut re_head = 0.0;
    let mut im_head = 0.0;
    let mut fact_even = 1.0; // (2k)!
    for k in 1..40 {
        let k2 = 2 * k;
        fact_even *= (k2 - 1) as f64 * k2 as f64;
        let sgn = if k % 2 == 1 { 1.0 } else { -1.0 };
        let p = k2 as f64 - alpha;
        let term = a.powi(k2 as i32) / fact_even * h.powf(p) / p;
        re_head += sgn * term;
        if term.abs() < 1e-20 {
            break;
        }
    }
    let mut fact_odd = 1.0; // (2k+1)!
    let k_start = if comp == Compensation::None { 0 } else { 1 };
    for k in 0..40 {
        if k > 0 {
            fact_odd *= (2 * k) as f64 * (2 * k + 1) as f64;
        }
        if k < k_start {
            continue;
        }
        let p = (2 * k + 1) as f64 - alpha;
        let term = a.powi(2 * k as i32 + 1) / fact_odd * h.powf(p) / p;
        // (a r − sin a r) has coefficients (−1)^{k+1}; −sin a r has (−1)^{k+1} too
        let sgn = if k % 2 == 0 { -1.0 } else { 1.0 };
        im_head += sgn * term;
        if term.abs() < 1e-20 && k > 1 {
            break;
        }
    }
    let r_end = h + 40.0 / aa;
    let mut breaks = vec![h];
    let step = std::f64::consts::PI / aa;
    let mut r = h;
    while r < r_end {
        let next = (r + step.min(r)).min(r_end);
        breaks.push(next);
        r = next;
    }
    let opts = QuadOpts::tol(1e-13 * aa.powf(alpha), 1e-13);
    let re_mid = integrate_breaks(
        |r| (1.0 - (a * r).cos()) * r.powf(-1.0 - alpha),
        &breaks,
        opts,
    );
    let sin_mid = integrate_breaks(|r| (a * r).sin() * r.powf(-1.0 - alpha), &breaks, opts);
    let (osc, osc_err) = osc_power_tail(a, r_end, 1.0 + alpha)?;
    let re_tail = r_end.powf(-alpha) / alpha - osc.re;
    // ∫_h^∞ a r c(r) r^{-1-α} dr in closed form
    let lin = match comp {
        Compensation::None => 0.0,
        Compensation::Full => a * h.powf(1.0 - alpha) / (alpha - 1.0),
        Compensation::Truncated => {
            if h >= 1.0 {
                0.0
            } else if alpha == 1.0 {
                -a * h.ln()
            } else {
                a * (1.0 - h.powf(1.0 - alpha)) / (1.0 - alpha)
            }
        }
    };
    let im_rest = lin - sin_mid.value - osc.im;
    let value = Complex64::new(re_head + re_mid.value + re_tail, im_head + im_rest);
    let err = re_mid.error + sin_mid.error + 2.0 * osc_err + 1e-15 * (value.norm() + lin.abs());
    if !(re_mid.converged && sin_mid.converged) {
        return Err(CoreError::Accuracy {
            context: "radial symbol integral".into(),
            partial: value.re,
            error: err,
        });
    }
    Ok((value, err))
}

/// `E|θ₁|^α` for θ uniform on the sphere, by quadrature in the polar angle.
fn sphere_abs_moment_quadrature(d: usize, alpha: f64) -> Result<(f64, f64)> {
    if d == 1 {
        return Ok((1.0, 0.0));
    }
    let pi = std::f64::consts::PI;
    let br = [0.0, 0.5 * pi, pi];
    let opts = QuadOpts::tol(1e-15, 1e-13);
    let w = |phi: f64| phi.sin().abs().powi(d as i32 - 2);
    let num = integrate_breaks(|p| p.cos().abs().powf(alpha) * w(p), &br, opts).require("sphere moment")?;
    let den = integrate_breaks(w, &br, opts).require("sphere moment")?;
    Ok((num.value / den.value, (num.error + den.error) / den.value))
}

fn check_dims(measure: &StableMeasure, sigma: &Mat, xi: &[f64]) -> Result<()> {
    let d = measure.dim();
    if sigma.nrows() != d || sigma.ncols() != d {
        return Err(CoreError::DimensionMismatch {
            expected: d,
            found: sigma.nrows(),
        });
    }
    if xi.len() != d {
        return Err(CoreError::DimensionMismatch {
            expected: d,
            found: xi.len(),
        });
    }
    Ok(())
}

/// Closed-form symbol `K_α ∫ |ξ·σθ|^α Σ(dθ)` for symmetric stable measures.
/// Asymmetric measures fall back to [`general_symbol`].
pub fn stable_symbol(measure: &StableMeasure, sigma: &Mat, xi: &[f64]) -> Result<SymbolEvaluation> {
    check_dims(measure, sigma, xi)?;
    if !measure.is_symmetric() {
        return general_symbol(measure, sigma, xi, measure.alpha);
    }
    let k = radial_constant(measure.alpha)?;
    let w = linalg::mat_t_vec(sigma, xi);
    let s = measure.spherical.abs_power_integral(&w, measure.alpha);
    let re = k * s;
    Ok(SymbolEvaluation {
        xi: xi.to_vec(),
        value: Complex64::new(re, 0.0),
        method: Method::ClosedForm,
        est_error: 1e-13 * re.abs(),
    })
}

/// Symbol by spherical sum times radial quadrature, with the compensator of
/// the exponent `alpha_convention`.
pub fn general_symbol(
    measure: &StableMeasure,
    sigma: &Mat,
    xi: &[f64],
    alpha_convention: f64,
) -> Result<SymbolEvaluation> {
    check_dims(measure, sigma, xi)?;
    if !(alpha_convention > 0.0 && alpha_convention < 2.0) {
        return Err(CoreError::InvalidInput(format!(
            "alpha convention {alpha_convention} must lie in (0, 2)"
        )));
    }
    let comp = Compensation::for_alpha(alpha_convention);
    let w = linalg::mat_t_vec(sigma, xi);
    let alpha = measure.alpha;
    let mut value = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    match &measure.spherical {
        SphericalMeasure::Atoms { atoms, .. } => {
            for at in atoms.iter().filter(|a| a.weight > 0.0) {
                let a = linalg::dot(&w, &at.direction);
                let (v, e) = radial_integral(a, alpha, comp)?;
                value += at.weight * v;
                err += at.weight * e;
            }
        }
        SphericalMeasure::Isotropic { dim, mass } => {
            let n = linalg::norm(&w);
            if n > 0.0 && *mass > 0.0 {
                // odd part integrates to zero over the sphere
                let comp_even = if alpha < 1.0 {
                    Compensation::None
                } else if alpha > 1.0 {
                    Compensation::Full
                } else {
                    Compensation::Truncated
                };
                let (v, e) = radial_integral(n, alpha, comp_even)?;
                let (m, me) = sphere_abs_moment_quadrature(*dim, alpha)?;
                // Re ψ at scale n is K_α n^α; every direction θ sees n|θ₁|
                value = Complex64::new(mass * v.re * m, 0.0);
                err = mass * (e * m + v.re.abs() * me);
            }
        }
    }
    Ok(SymbolEvaluation {
        xi: xi.to_vec(),
        value,
        method: Method::Quadrature,
        est_error: err,
    })
}

/// Evaluate many ξ in parallel; the order of the output matches the input.
pub fn stable_symbol_batch(
    measure: &StableMeasure,
    sigma: &Mat,
    xis: &[Vec<f64>],
) -> Result<Vec<SymbolEvaluation>> {
    xis.par_iter().map(|xi| stable_symbol(measure, sigma, xi)).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundRow {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub re_psi: f64,
    pub bound: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub k_alpha: f64,
    pub min_singular_value: f64,
    pub nondegeneracy: f64,
    pub rows: Vec<LowerBoundRow>,
    pub min_margin: f64,
}

/// Compare `Re ψ^{ν_x}_σ(ξ)` with `K_α s_min(σ)^α κ(Σ) |ξ|^α` where ν_x is
/// the model's measure at each point and κ the nondegeneracy constant of the
/// lower measure.
pub fn lower_bound_check(
    measure: &StableMeasure,
    model: &LevyModel,
    sigma: &Mat,
    xi_set: &[Vec<f64>],
    points: &[Vec<f64>],
) -> Result<LowerBoundReport> {
    let lower = model.base.scaled(model.m_min);
    if !dominates(measure, &lower)? {
        return Err(CoreError::InvalidInput(
            "the model's lower measure does not dominate the given measure".into(),
        ));
    }
    let k = radial_constant(measure.alpha)?;
    let smin = linalg::min_singular_value(sigma);
    let kappa = nondegeneracy_constant(&measure.spherical, measure.alpha)?;
    let mut rows = Vec::new();
    let default_point = vec![vec![0.0; model.dim()]];
    let pts = if points.is_empty() { &default_point[..] } else { points };
    for x in pts {
        let nu = model.nu_at(0.0, x);
        for xi in xi_set {
            let re = stable_symbol(&nu, sigma, xi)?.value.re;
            let bound = k * smin.powf(measure.alpha) * kappa * linalg::norm(xi).powf(measure.alpha);
            rows.push(LowerBoundRow {
                x: x.clone(),
                xi: xi.clone(),
                re_psi: re,
                bound,
                margin: re - bound,
            });
        }
    }
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(LowerBoundReport {
        k_alpha: k,
        min_singular_value: smin,
        nondegeneracy: kappa,
        rows,
        min_margin,
    })
}

/// `β_α` of the continuity estimate: α below 1, 1 above, the chosen value at 1.
pub fn continuity_exponent(alpha: f64, beta_at_one: f64) -> f64 {
    if alpha < 1.0 {
        alpha
    } else if alpha > 1.0 {
        1.0
    } else {
        beta_at_one
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityReport {
    pub ratios: Vec<f64>,
    pub k_difference: f64,
    pub sigma_distance: f64,
    pub beta: f64,
    pub fitted_constant: f64,
}

/// Smallest K with `|ν₁ − ν₂| ≤ K ν^{(α)}`, where the reference measure is ν₁
/// (atom by atom weight ratio, or mass ratio for isotropic measures).
pub fn measure_distance_constant(nu1: &StableMeasure, nu2: &StableMeasure) -> Result<f64> {
    use SphericalMeasure::*;
    match (&nu1.spherical, &nu2.spherical) {
        (Isotropic { mass: a, .. }, Isotropic { mass: b, .. }) => Ok(if *a > 0.0 {
            (a - b).abs() / a
        } else {
            0.0
        }),
        (Atoms { atoms: a1, .. }, Atoms { atoms: a2, .. }) => {
            if a1.len() != a2.len() {
                return Err(CoreError::Undecidable("atom sets differ".into()));
            }
            let mut k: f64 = 0.0;
            for (x, y) in a1.iter().zip(a2) {
                if x.direction.iter().zip(&y.direction).any(|(p, q)| (p - q).abs() > 1e-9) {
                    return Err(CoreError::Undecidable("atom directions differ".into()));
                }
                if x.weight > 0.0 {
                    k = k.max((x.weight - y.weight).abs() / x.weight);
                } else if y.weight > 0.0 {
                    return Err(CoreError::Undecidable("reference atom has zero weight".into()));
                }
            }
            Ok(k)
        }
        _ => Err(CoreError::Undecidable("mixed atomic and isotropic measures".into())),
    }
}

/// Ratios `|ψ^{ν₁}_{σ₁}(ξ) − ψ^{ν₂}_{σ₂}(ξ)| / |ξ|^α` and the constant fitted
/// against `K + |σ₁ − σ₂|^β`.
pub fn symbol_continuity_check(
    nu1: &StableMeasure,
    nu2: &StableMeasure,
    sigma1: &Mat,
    sigma2: &Mat,
    xi_set: &[Vec<f64>],
    beta_at_one: f64,
) -> Result<ContinuityReport> {
    if !(nu1.is_symmetric() && nu2.is_symmetric()) {
        return Err(CoreError::InvalidInput("continuity check needs symmetric measures".into()));
    }
    let alpha = nu1.alpha;
    let kd = measure_distance_constant(nu1, nu2)?;
    let ds = linalg::operator_norm(&(sigma1 - sigma2));
    let beta = continuity_exponent(alpha, beta_at_one);
    let mut ratios = Vec::with_capacity(xi_set.len());
    for xi in xi_set {
        let n = linalg::norm(xi);
        if n == 0.0 {
            ratios.push(0.0);
            continue;
        }
        let a = stable_symbol(nu1, sigma1, xi)?.value;
        let b = stable_symbol(nu2, sigma2, xi)?.value;
        ratios.push((a - b).norm() / n.powf(alpha));
    }
    let denom = kd + ds.powf(beta);
    let maxr = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(ContinuityReport {
        ratios,
        k_difference: kd,
        sigma_distance: ds,
        beta,
        fitted_constant: if denom > 0.0 { maxr / denom } else { 0.0 },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub eps: Vec<f64>,
    pub differences: Vec<f64>,
    pub exponent: f64,
    pub constant: f64,
}

/// Fit `sup_ξ |ψ_{σ+εI}(ξ) − ψ_σ(ξ)| ≈ C ε^b` over `ε = 2^{-k}`, k in `ks`.
pub fn sigma_perturbation_exponent(
    nu: &StableMeasure,
    sigma: &Mat,
    xi_set: &[Vec<f64>],
    ks: std::ops::RangeInclusive<i32>,
) -> Result<ExponentFit> {
    let d = nu.dim();
    let mut eps = Vec::new();
    let mut diffs = Vec::new();
    for k in ks {
        let e = 2f64.powi(-k);
        let s2 = sigma + linalg::identity(d) * e;
        let mut worst: f64 = 0.0;
        for xi in xi_set {
            let a = stable_symbol(nu, sigma, xi)?.value;
            let b = stable_symbol(nu, &s2, xi)?.value;
            worst = worst.max((a - b).norm());
        }
        eps.push(e);
        diffs.push(worst);
    }
    let fit = stats::loglog_fit(&eps, &diffs);
    Ok(ExponentFit {
        eps,
        differences: diffs,
        exponent: fit.slope,
        constant: fit.intercept.exp(),
    })
}

/// Fit of `log ψ(r ξ̂)` against `log r` along one direction.
pub fn homogeneity_exponent(measure: &StableMeasure, sigma: &Mat, dir: &[f64], radii: &[f64]) -> Result<f64> {
    let mut vals = Vec::with_capacity(radii.len());
    for r in radii {
        let xi: Vec<f64> = dir.iter().map(|v| v * r).collect();
        vals.push(stable_symbol(measure, sigma, &xi)?.value.re);
    }
    Ok(stats::loglog_fit(radii, &vals).slope)
}

/// `∫ (1 − cos(ξ·y)) |y|^{−d−α} dy / |ξ|^α` in closed form through the
/// isotropic representation: `K_α |S^{d−1}| E|θ₁|^α`.
pub fn isotropic_constant(d: usize, alpha: f64) -> Result<f64> {
    Ok(radial_constant(alpha)? * crate::measures::sphere_area(d) * sphere_abs_moment(d, alpha))
}
