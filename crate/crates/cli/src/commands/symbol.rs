use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;
use stablelike::linalg;
use stablelike::measures::{SphericalMeasure, StableMeasure};
use stablelike::stats;
use stablelike::symbol::stable_symbol;

use crate::config::{self, Source, Tolerances};
use crate::output::{num, Outcome, Table};
use crate::RunError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymbolConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    measure: Source<StableMeasure>,
    #[serde(default)]
    sigma: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    radii: Option<Vec<f64>>,
    #[serde(default = "sixteen")]
    directions: usize,
}

fn sixteen() -> usize {
    16
}

/// `n` unit vectors: `±1` on the line, equally spaced angles in the plane,
/// a golden-angle spiral otherwise.
pub fn directions(d: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|k| match d {
            1 => vec![if k % 2 == 0 { 1.0 } else { -1.0 }],
            2 => {
                let a = 2.0 * PI * k as f64 / n as f64 + 0.1;
                vec![a.cos(), a.sin()]
            }
            _ => {
                let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                let r = (1.0 - z * z).sqrt();
                let a = k as f64 * PI * (3.0 - 5f64.sqrt());
                let mut v = vec![0.0; d];
                v[0] = r * a.cos();
                v[1] = r * a.sin();
                v[2] = z;
                v
            }
        })
        .collect()
}

pub fn run(raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: SymbolConfig = config::parse(raw)?;
    let tol = cfg.tolerances.resolve(&[("exponent", 1e-3), ("direction_spread", 1e-6)])?;
    let m = cfg.measure.resolve(base)?;
    m.validate()?;
    let d = m.dim();
    let sigma = config::matrix(&cfg.sigma, d)?;
    config::at_least("directions", cfg.directions, 1)?;
    let radii = cfg
        .radii
        .clone()
        .unwrap_or_else(|| (0..9).map(|k| 10f64.powf(-1.0 + 0.25 * k as f64)).collect());
    if radii.len() < 2 || radii.iter().any(|r| !(*r > 0.0)) {
        return Err(config::bad("radii must hold at least two positive values"));
    }
    let alpha = m.alpha;
    let dirs = directions(d, cfg.directions);
    let mut t = Table::new("symbol", &["direction", "radius", "xi", "re_psi", "im_psi", "est_error", "ratio"]);
    let mut exponents = Vec::new();
    let mut ratios = Vec::new();
    for (k, u) in dirs.iter().enumerate() {
        let mut re = Vec::new();
        for r in &radii {
            let xi: Vec<f64> = u.iter().map(|v| v * r).collect();
            let s = stable_symbol(&m, &sigma, &xi)?;
            let ratio = s.value.re / r.powf(alpha);
            t.push(vec![
                k.to_string(),
                num(*r),
                crate::output::nums(&xi),
                num(s.value.re),
                num(s.value.im),
                num(s.est_error),
                num(ratio),
            ]);
            re.push(s.value.re);
            ratios.push(ratio);
        }
        if re.iter().all(|v| *v > 0.0) {
            exponents.push(stats::loglog_fit(&radii, &re).slope);
        } else {
            exponents.push(f64::NAN);
        }
    }
    let worst_exp = exponents.iter().map(|e| (e - alpha).abs()).fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    let rmax = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let rmin = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let spread = if rmin > 0.0 { rmax / rmin - 1.0 } else { f64::INFINITY };
    let mut out = Outcome::new("symbol", cfg.seed.or(seed));
    out.check(
        "homogeneity_exponent",
        worst_exp <= tol["exponent"],
        format!("max |fitted exponent − α| = {worst_exp:e} (α = {alpha})"),
    );
    // direction independence only holds for rotation-invariant symbols
    let isotropic = matches!(m.spherical, SphericalMeasure::Isotropic { .. }) && {
        let g = sigma.transpose() * &sigma;
        let c = g[(0, 0)];
        (g - linalg::identity(d) * c).abs().max() <= 1e-14 * c
    };
    if isotropic {
        out.check(
            "direction_independence",
            spread <= tol["direction_spread"],
            format!("max/min of ψ/|ξ|^α − 1 = {spread:e} over {} directions", dirs.len()),
        );
    }
    out.report = serde_json::json!({
        "alpha": alpha,
        "dimension": d,
        "fitted_exponents": exponents,
        "max_exponent_error": worst_exp,
        "ratio_min": rmin,
        "ratio_max": rmax,
        "ratio_spread": spread,
        "isotropic": isotropic,
        "tolerances": tol,
    });
    out.tables.push(t);
    Ok(out)
}
