use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;
use stablelike::io::{encode_fields, field_header};
use stablelike::measures::StableMeasure;
use stablelike::pde::{
    estimate_checks, evaluate_at, feynman_kac_resolvent, lambda_ladder, refinement_ladder, spectral_resolvent,
    weak_formulation_residual, FeynmanKacOpts, PiecewiseField, Symbol,
};
use stablelike::sampler::{uniform_grid, DriverSpec};

use crate::config::{self, Source, Tolerances};
use crate::output::{num, nums, Outcome, Table};
use crate::RunError;

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SymbolConfig {
    Stable {
        measure: Source<StableMeasure>,
        #[serde(default)]
        sigma: Option<Vec<Vec<f64>>>,
    },
    /// `c|ξ|^α`
    FractionalLaplacian { alpha: f64, c: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Mode {
    k: Vec<f64>,
    #[serde(default)]
    cos: f64,
    #[serde(default)]
    sin: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Forcing {
    Constant { value: f64 },
    /// `(1 + growth·t)(offset + Σ cos·cos(k·x) + sin·sin(k·x))`
    Trig {
        terms: Vec<Mode>,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        growth: f64,
    },
}

impl Forcing {
    fn eval(&self, t: f64, x: &[f64]) -> f64 {
        match self {
            Forcing::Constant { value } => *value,
            Forcing::Trig { terms, offset, growth } => {
                let s: f64 = terms
                    .iter()
                    .map(|m| {
                        let a: f64 = m.k.iter().zip(x).map(|(k, x)| k * x).sum();
                        m.cos * a.cos() + m.sin * a.sin()
                    })
                    .sum();
                (1.0 + growth * t) * (offset + s)
            }
        }
    }

    /// Lower bound of `f` over space at time `t`.
    fn lower_bound(&self, t: f64) -> f64 {
        match self {
            Forcing::Constant { value } => *value,
            Forcing::Trig { terms, offset, growth } => {
                let amp: f64 = terms.iter().map(|m| m.cos.hypot(m.sin)).sum();
                (1.0 + growth * t) * (offset - amp)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FkConfig {
    probes: Vec<Vec<f64>>,
    n_paths: usize,
    #[serde(default = "substeps")]
    substeps: usize,
}

fn substeps() -> usize {
    16
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LadderConfig {
    resolutions: Vec<usize>,
    #[serde(default = "four")]
    p: f64,
}

fn four() -> f64 {
    4.0
}

fn two_pi() -> f64 {
    2.0 * PI
}

fn default_p() -> Vec<f64> {
    vec![2.0, 4.0]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PdeConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    symbol: SymbolConfig,
    /// Order of `Δ^{α/2}` in the regularity ratio; defaults to the symbol's index.
    #[serde(default)]
    alpha: Option<f64>,
    d: usize,
    n: usize,
    #[serde(default = "two_pi")]
    period: f64,
    horizon: f64,
    intervals: usize,
    lambda: f64,
    forcing: Forcing,
    #[serde(default = "default_p")]
    p_values: Vec<f64>,
    #[serde(default)]
    refinement: Option<LadderConfig>,
    #[serde(default)]
    lambda_ladder: Option<Vec<f64>>,
    #[serde(default)]
    feynman_kac: Option<FkConfig>,
    #[serde(default = "yes")]
    write_fields: bool,
}

fn yes() -> bool {
    true
}

pub fn run(raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: PdeConfig = config::parse(raw)?;
    let tol = cfg.tolerances.resolve(&[
        ("lp_growth", 1e-10),
        ("weak_residual", 1e-8),
        ("l2_agreement", 1e-8),
        ("refinement_max_min", 1.2),
        ("lambda_slope", 0.05),
        ("fk_sigmas", 4.0),
        ("positivity", 1e-8),
    ])?;
    config::positive("horizon", cfg.horizon)?;
    config::at_least("intervals", cfg.intervals, 1)?;
    if !(cfg.lambda >= 0.0 && cfg.lambda.is_finite()) {
        return Err(config::bad("lambda must be finite and ≥ 0"));
    }
    let (symbol, driver, sym_alpha) = match &cfg.symbol {
        SymbolConfig::Stable { measure, sigma } => {
            let m = measure.resolve(base)?;
            m.validate()?;
            if m.dim() != cfg.d {
                return Err(config::bad(format!("measure has dimension {}, grid has {}", m.dim(), cfg.d)));
            }
            let s = config::matrix(sigma, cfg.d)?;
            let alpha = m.alpha;
            (Symbol::stable(m.clone(), s.clone()), Some(DriverSpec::new(m, s)), alpha)
        }
        SymbolConfig::FractionalLaplacian { alpha, c } => {
            if !(*alpha > 0.0 && *alpha <= 2.0) {
                return Err(config::bad("alpha must lie in (0, 2]"));
            }
            config::positive("c", *c)?;
            (Symbol::fractional_laplacian(*alpha, *c), None, *alpha)
        }
    };
    let alpha = cfg.alpha.unwrap_or(sym_alpha);
    let times = uniform_grid(cfg.horizon, cfg.intervals);
    let forcing = cfg.forcing.clone();
    let fcl = move |t: f64, x: &[f64]| forcing.eval(t, x);
    let pf = PiecewiseField::sample(&fcl, &times, cfg.d, cfg.n, cfg.period)?;
    let sol = spectral_resolvent(&symbol, &pf, cfg.lambda)?;
    let mut out = Outcome::new("pde", cfg.seed.or(seed));

    // Lp growth rows and regularity ratios
    let mut lp_growth = Table::new("lp_growth", &["p", "t", "lhs", "rhs", "ratio"]);
    let mut reg = Table::new("regularity", &["p", "regularity_ratio", "lp_growth_max_ratio", "l2_ratio_grid", "l2_ratio_spectral", "l2_bound"]);
    let constant = matches!(cfg.forcing, Forcing::Constant { .. });
    let mut reports = Vec::new();
    for p in &cfg.p_values {
        let r = estimate_checks(&sol, &pf, *p, alpha)?;
        for row in &r.lp_growth {
            lp_growth.push(vec![num(*p), num(row.t), num(row.lhs), num(row.rhs), num(row.ratio)]);
        }
        let (g, s, b) = r.l2.as_ref().map_or((String::new(), String::new(), String::new()), |l| {
            (num(l.ratio_grid), num(l.ratio_spectral), num(l.bound))
        });
        reg.push(vec![num(*p), num(r.regularity_ratio), num(r.lp_growth_max_ratio), g, s, b]);
        let rows: Vec<_> = r.lp_growth.iter().filter(|row| row.t > 0.0).collect();
        if constant {
            let dev = rows.iter().map(|row| (row.ratio - 1.0).abs()).fold(0.0, f64::max);
            out.check(&format!("lp_growth_equality_p{p}"), dev <= tol["lp_growth"], format!("max |ratio − 1| = {dev}"));
        } else {
            out.check(
                &format!("lp_growth_bound_p{p}"),
                r.lp_growth_max_ratio <= 1.0 + tol["lp_growth"],
                format!("max ratio = {}", r.lp_growth_max_ratio),
            );
        }
        if let Some(l) = &r.l2 {
            let rel = (l.ratio_grid - l.ratio_spectral).abs() / l.ratio_spectral.max(f64::MIN_POSITIVE);
            out.check(
                "l2_spectral_constant",
                rel <= tol["l2_agreement"] && l.ratio_grid <= l.bound * (1.0 + 1e-12),
                format!("grid {} vs spectral {} (rel {rel}), bound {}", l.ratio_grid, l.ratio_spectral, l.bound),
            );
        }
        reports.push(r);
    }
    out.tables.push(lp_growth);
    out.tables.push(reg);

    let fnorm = pf.fields.iter().map(|g| g.lp_norm(2.0)).fold(0.0, f64::max);
    let weak = weak_formulation_residual(&sol, &pf)?;
    let wmax = weak.iter().cloned().fold(0.0, f64::max);
    let wbound = tol["weak_residual"] * fnorm.max(1.0) * cfg.horizon;
    out.check("weak_formulation", wmax <= wbound, format!("max residual {wmax} ≤ {wbound}"));

    let fmin = times[..times.len() - 1].iter().map(|t| cfg.forcing.lower_bound(*t)).fold(f64::INFINITY, f64::min);
    if fmin >= 0.0 {
        let umin = sol.fields.iter().flat_map(|u| u.values().iter().cloned()).fold(f64::INFINITY, f64::min);
        let scale = pf.fields.iter().map(|g| g.lp_norm(f64::INFINITY)).fold(0.0, f64::max) * cfg.horizon;
        out.check("positivity", umin >= -tol["positivity"] * scale.max(1.0), format!("min u = {umin}"));
    }

    let mut ladder_report = None;
    if let Some(lc) = &cfg.refinement {
        let l = refinement_ladder(&symbol, &fcl, &times, cfg.d, cfg.period, &lc.resolutions, cfg.lambda, lc.p, alpha)?;
        let mut t = Table::new("refinement", &["n", "p", "regularity_ratio"]);
        for (n, r) in l.resolutions.iter().zip(&l.ratios) {
            t.push(vec![n.to_string(), num(lc.p), num(*r)]);
        }
        out.tables.push(t);
        out.check(
            "refinement_stable",
            l.max_min_ratio <= tol["refinement_max_min"],
            format!("max/min = {} over {:?}", l.max_min_ratio, l.resolutions),
        );
        ladder_report = Some(l);
    }

    let mut lambda_report = None;
    if let Some(ls) = &cfg.lambda_ladder {
        let l = lambda_ladder(&symbol, &pf, ls)?;
        let mut t = Table::new("lambda", &["lambda", "sup_l2_norm"]);
        for (a, b) in l.lambdas.iter().zip(&l.sup_norms) {
            t.push(vec![num(*a), num(*b)]);
        }
        out.tables.push(t);
        out.check(
            "lambda_decay",
            (l.slope + 1.0).abs() <= tol["lambda_slope"],
            format!("slope {} ± {}", l.slope, l.slope_stderr),
        );
        lambda_report = Some(l);
    }

    let mut fk_report = None;
    if let Some(fc) = &cfg.feynman_kac {
        let spec = driver.as_ref().ok_or_else(|| config::bad("feynman_kac needs a stable symbol"))?;
        let seed = config::require_seed(seed, cfg.seed)?;
        let opts = FeynmanKacOpts {
            n_paths: fc.n_paths,
            substeps: fc.substeps,
            seed,
        };
        let fk = feynman_kac_resolvent(spec, &fcl, &times, &fc.probes, cfg.lambda, opts)?;
        let mut t = Table::new("feynman_kac", &["time", "probe", "spectral", "monte_carlo", "stderr", "z"]);
        let mut zmax = 0f64;
        for (k, u) in sol.fields.iter().enumerate().skip(1) {
            for (j, x) in fc.probes.iter().enumerate() {
                let want = evaluate_at(u, x)?;
                let (got, se) = (fk.probe_values[k][j], fk.probe_stderr[k][j]);
                let z = if se > 0.0 {
                    (got - want).abs() / se
                } else if (got - want).abs() <= 1e-12 * want.abs().max(1.0) {
                    0.0
                } else {
                    f64::INFINITY
                };
                zmax = zmax.max(z);
                t.push(vec![num(times[k]), nums(x), num(want), num(got), num(se), num(z)]);
            }
        }
        out.tables.push(t);
        out.check("feynman_kac_agreement", zmax <= tol["fk_sigmas"], format!("max |Δ|/stderr = {zmax}"));
        out.seed = Some(seed);
        fk_report = Some(fk);
    }

    if cfg.write_fields {
        let header = field_header(&sol.fields, &sol.times)?;
        out.blobs.push(("u.json".into(), serde_json::to_vec_pretty(&header).expect("json")));
        out.blobs.push(("u.bin".into(), encode_fields(&sol.fields)));
    }
    out.report = serde_json::json!({
        "symbol": symbol.describe(),
        "alpha": alpha,
        "lambda": cfg.lambda,
        "times": times,
        "estimates": reports,
        "weak_residuals": weak,
        "refinement": ladder_report,
        "lambda_ladder": lambda_report,
        "feynman_kac": fk_report.map(|f| serde_json::json!({
            "probes": f.probes, "values": f.probe_values, "stderr": f.probe_stderr
        })),
        "tolerances": tol,
    });
    Ok(out)
}
