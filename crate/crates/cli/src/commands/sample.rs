use std::path::Path;

use num_complex::Complex64;
use serde::Deserialize;
use stablelike::io::encode_ensemble;
use stablelike::linalg;
use stablelike::sampler::{sample_driver, uniform_grid};
use stablelike::symbol::stable_symbol;

use crate::config::{self, DriverConfig, Tolerances};
use crate::output::{num, nums, Outcome, Table};
use crate::RunError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CfGrid {
    lo: f64,
    hi: f64,
    n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    driver: DriverConfig,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    #[serde(default)]
    cf_grid: Option<CfGrid>,
    #[serde(default = "yes")]
    write_ensemble: bool,
}

fn yes() -> bool {
    true
}

fn grid_points(d: usize, g: &CfGrid) -> Vec<Vec<f64>> {
    let axis: Vec<f64> = (0..g.n)
        .map(|i| if g.n == 1 { g.lo } else { g.lo + (g.hi - g.lo) * i as f64 / (g.n - 1) as f64 })
        .collect();
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p: Vec<f64>| {
                axis.iter().map(move |a| {
                    let mut q = p.clone();
                    q.push(*a);
                    q
                })
            })
            .collect();
    }
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let j = (i + 1).min(sorted.len() - 1);
    sorted[i] + (pos - i as f64) * (sorted[j] - sorted[i])
}

pub fn run(raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: SampleConfig = config::parse(raw)?;
    let tol = cfg.tolerances.resolve(&[("cf_sigmas", 4.0)])?;
    let seed = config::require_seed(seed, cfg.seed)?;
    config::positive("horizon", cfg.horizon)?;
    config::at_least("steps", cfg.steps, 1)?;
    config::at_least("n_paths", cfg.n_paths, 2)?;
    let (spec, m, sigma) = cfg.driver.build(base)?;
    let d = m.dim();
    let times = uniform_grid(cfg.horizon, cfg.steps);
    let ens = sample_driver(&spec, &times, cfg.n_paths, seed)?;
    let mut out = Outcome::new("sample", Some(seed));

    let mut summary = Table::new("summary", &["time", "coord", "q25", "median", "q75"]);
    for (k, t) in times.iter().enumerate() {
        for c in 0..d {
            let mut v = ens.marginal(k, c);
            v.sort_by(f64::total_cmp);
            summary.push(vec![num(*t), c.to_string(), num(quantile(&v, 0.25)), num(quantile(&v, 0.5)), num(quantile(&v, 0.75))]);
        }
    }
    out.tables.push(summary);

    let grid = cfg.cf_grid.unwrap_or(CfGrid { lo: -1.5, hi: 1.5, n: 5 });
    config::at_least("cf_grid.n", grid.n, 1)?;
    let kt = times.len() - 1;
    let t_end = times[kt];
    let bound = tol["cf_sigmas"] / (cfg.n_paths as f64).sqrt();
    let mut cf = Table::new("cf", &["xi", "time", "re_empirical", "im_empirical", "re_exact", "im_exact", "abs_error", "bound"]);
    let mut worst: f64 = 0.0;
    for xi in grid_points(d, &grid) {
        let psi = stable_symbol(&m, &sigma, &xi)?.value;
        let exact = (-t_end * psi).exp();
        let mut s = Complex64::new(0.0, 0.0);
        for p in 0..ens.n_paths() {
            s += Complex64::from_polar(1.0, linalg::dot(&xi, ens.state(p, kt)));
        }
        let emp = s / ens.n_paths() as f64;
        let err = (emp - exact).norm();
        worst = worst.max(err);
        cf.push(vec![nums(&xi), num(t_end), num(emp.re), num(emp.im), num(exact.re), num(exact.im), num(err), num(bound)]);
    }
    out.check(
        "characteristic_function",
        worst <= bound,
        format!("max |φ̂ − exp(−tψ)| = {worst:e} vs {bound:e} at t = {t_end}"),
    );
    out.tables.push(cf);
    if cfg.write_ensemble {
        out.blobs.push(("ensemble.bin".into(), encode_ensemble(&ens)));
    }
    out.report = serde_json::json!({
        "dimension": d,
        "alpha": m.alpha,
        "n_paths": cfg.n_paths,
        "times": times,
        "scheme": ens.meta.scheme,
        "delta": if ens.meta.delta.is_finite() { Some(ens.meta.delta) } else { None },
        "truncation_l2_bound": ens.meta.truncation_l2_bound,
        "cf_max_error": worst,
        "cf_bound": bound,
    });
    Ok(out)
}
