use std::path::Path;

use serde::Deserialize;
use stablelike::measures::LevyModel;
use stablelike::sampler::{sample_driver, uniform_grid, PathEnsemble};
use stablelike::verify::{krylov_ratio_sweep, martingale_residual, perturbed_model, Conditioning, KrylovHypothesis};

use crate::config::{self, DriverConfig, TestFunctionSpec, Tolerances};
use crate::output::{num, Outcome, Table};
use crate::RunError;

fn two() -> f64 {
    2.0
}

fn one() -> Conditioning {
    Conditioning::One
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MgpConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    driver: DriverConfig,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    test_functions: Vec<TestFunctionSpec>,
    #[serde(default)]
    t1: f64,
    #[serde(default)]
    t2: Option<f64>,
    #[serde(default = "one")]
    conditioning: Conditioning,
    /// Jump intensity factor of the negative-control model.
    #[serde(default = "two")]
    control_factor: f64,
}

fn sample(driver: &DriverConfig, base: &Path, horizon: f64, steps: usize, n: usize, seed: u64) -> Result<(PathEnsemble, LevyModel), RunError> {
    config::positive("horizon", horizon)?;
    config::at_least("steps", steps, 1)?;
    config::at_least("n_paths", n, 2)?;
    let (spec, m, s) = driver.build(base)?;
    let ens = sample_driver(&spec, &uniform_grid(horizon, steps), n, seed)?;
    Ok((ens, LevyModel::constant(m, s)))
}

pub fn run_mgp(raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: MgpConfig = config::parse(raw)?;
    let tol = cfg.tolerances.resolve(&[("null_z", 4.0), ("control_z", 6.0)])?;
    let seed = config::require_seed(seed, cfg.seed)?;
    if cfg.test_functions.is_empty() {
        return Err(config::bad("test_functions must not be empty"));
    }
    config::positive("control_factor", cfg.control_factor)?;
    if cfg.control_factor == 1.0 {
        return Err(config::bad("control_factor = 1 gives no negative control"));
    }
    let (ens, model) = sample(&cfg.driver, base, cfg.horizon, cfg.steps, cfg.n_paths, seed)?;
    let d = model.dim();
    let t2 = cfg.t2.unwrap_or(cfg.horizon);
    let wrong = perturbed_model(&model, cfg.control_factor);
    let mut t = Table::new(
        "residuals",
        &["test_function", "model", "t1", "t2", "residual", "stderr", "z", "generator_budget", "time_budget", "consistent"],
    );
    let (mut null_max, mut control_min) = (0f64, f64::INFINITY);
    let mut rows = Vec::new();
    for spec in &cfg.test_functions {
        let phi = spec.build(d)?;
        let null = martingale_residual(&ens, &model, &phi, cfg.t1, t2, &cfg.conditioning)?;
        let ctl = martingale_residual(&ens, &wrong, &phi, cfg.t1, t2, &cfg.conditioning)?;
        for (label, r) in [("true", &null), ("control", &ctl)] {
            t.push(vec![
                r.test_function.clone(),
                label.into(),
                num(r.t1),
                num(r.t2),
                num(r.residual),
                num(r.stderr),
                num(r.z_score()),
                num(r.generator_error_budget),
                num(r.time_discretization_budget),
                r.consistent.to_string(),
            ]);
        }
        null_max = null_max.max(null.z_score());
        control_min = control_min.min(ctl.z_score());
        rows.push(serde_json::json!({ "true": null, "control": ctl }));
    }
    let mut out = Outcome::new("mgp-check", Some(seed));
    out.check("null_residual", null_max <= tol["null_z"], format!("max z = {null_max} (≤ {})", tol["null_z"]));
    out.check(
        "negative_control",
        control_min > tol["control_z"],
        format!("min z = {control_min} (> {}) with factor {}", tol["control_z"], cfg.control_factor),
    );
    out.tables.push(t);
    out.report = serde_json::json!({
        "conditioning": cfg.conditioning.describe(),
        "control_factor": cfg.control_factor,
        "rows": rows,
        "tolerances": tol,
    });
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KrylovConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    driver: DriverConfig,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    f: TestFunctionSpec,
    p: f64,
    lambdas: Vec<f64>,
    windows: Vec<(f64, f64)>,
    #[serde(default)]
    hypothesis: Option<KrylovHypothesis>,
}

pub fn run_krylov(raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: KrylovConfig = config::parse(raw)?;
    let tol = cfg
        .tolerances
        .resolve(&[("max_min_ratio", 3.0), ("trend_p", 0.05), ("beta_margin", 0.01), ("exponent_slack", 0.1)])?;
    let seed = config::require_seed(seed, cfg.seed)?;
    let (ens, model) = sample(&cfg.driver, base, cfg.horizon, cfg.steps, cfg.n_paths, seed)?;
    let d = model.dim();
    let alpha = model.alpha();
    let f = cfg.f.build(d)?;
    let hyp = cfg.hypothesis.unwrap_or_else(|| KrylovHypothesis::constant_coefficients(d, alpha));
    let r = krylov_ratio_sweep(&ens, &f, cfg.p, &cfg.lambdas, &cfg.windows, &hyp)?;
    let mut t = Table::new("krylov", &["lambda", "t1", "t2", "occupation", "stderr", "lp_norm", "ratio"]);
    for row in &r.rows {
        t.push(vec![num(row.lambda), num(row.t1), num(row.t2), num(row.occupation), num(row.stderr), num(row.lp_norm), num(row.ratio)]);
    }
    let beta_max = alpha * (1.0 - 1.0 / cfg.p) - tol["beta_margin"];
    let lower = 1.0 - beta_max / alpha - 1.0 / cfg.p - tol["exponent_slack"];
    let mut out = Outcome::new("krylov", Some(seed));
    out.check("in_theory", r.in_theory, format!("p = {} against threshold {}", r.p, r.p_threshold));
    out.check(
        "ratio_bounded",
        r.max_min_ratio <= tol["max_min_ratio"],
        format!("max/min = {} over {} λ values", r.max_min_ratio, r.ratios.len()),
    );
    out.check("no_trend", r.mann_kendall_p > tol["trend_p"], format!("Mann–Kendall p = {}", r.mann_kendall_p));
    out.check(
        "window_exponent",
        r.window_exponent >= lower && r.window_exponent <= 1.0,
        format!("exponent {} ± {} in [{lower}, 1]", r.window_exponent, r.window_exponent_stderr),
    );
    out.tables.push(t);
    out.report = serde_json::json!({ "krylov": r, "hypothesis": hyp, "tolerances": tol });
    Ok(out)
}
