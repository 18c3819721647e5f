use std::path::Path;

use serde::Deserialize;
use stablelike::io::encode_ensemble;
use stablelike::linalg;
use stablelike::rng::channel;
use stablelike::sampler::{sample_driver, uniform_grid};
use stablelike::sde::{coupled_uniqueness_experiment, euler_solve, euler_solve_two_driver, CoefficientField, CouplingConfig};
use stablelike::stats;

use crate::config::{self, DriverConfig, Source, Tolerances};
use crate::output::{num, Outcome, Table};
use crate::RunError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SecondDriver {
    driver: DriverConfig,
    coefficient: Source<CoefficientField>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SdeConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    driver: DriverConfig,
    coefficient: Source<CoefficientField>,
    #[serde(default)]
    second: Option<SecondDriver>,
    x0: Vec<f64>,
    horizon: f64,
    steps: usize,
    n_paths: usize,
    /// Moment order for `E|X_t − x0|^q`; must stay below α.
    q: f64,
    #[serde(default = "yes")]
    write_ensemble: bool,
}

fn yes() -> bool {
    true
}

pub fn run_sde(raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: SdeConfig = config::parse(raw)?;
    cfg.tolerances.resolve(&[])?;
    let seed = config::require_seed(seed, cfg.seed)?;
    config::positive("horizon", cfg.horizon)?;
    config::at_least("steps", cfg.steps, 1)?;
    config::at_least("n_paths", cfg.n_paths, 2)?;
    let (spec, m, _) = cfg.driver.build(base)?;
    let field = cfg.coefficient.resolve(base)?;
    if !(cfg.q > 0.0 && cfg.q < m.alpha) {
        return Err(config::bad(format!("q = {} must lie in (0, α) with α = {}", cfg.q, m.alpha)));
    }
    let grid = uniform_grid(cfg.horizon, cfg.steps);
    let l = sample_driver(&spec, &grid, cfg.n_paths, seed)?;
    let x = match &cfg.second {
        None => euler_solve(&field, &l, &cfg.x0)?,
        Some(sd) => {
            let (spec2, m2, _) = sd.driver.build(base)?;
            if m2.alpha >= m.alpha {
                return Err(config::bad("the second driver must have a smaller exponent"));
            }
            let field2 = sd.coefficient.resolve(base)?;
            let l2 = sample_driver(&spec2.with_channel(channel::DRIVER_SECOND), &grid, cfg.n_paths, seed)?;
            euler_solve_two_driver(&field, &field2, &l, &l2, &cfg.x0)?
        }
    };
    let mut t = Table::new("moments", &["time", "moment", "stderr"]);
    let mut moments = Vec::new();
    for (k, tk) in grid.iter().enumerate() {
        let z: Vec<f64> = (0..x.n_paths())
            .map(|p| {
                let dx: Vec<f64> = x.state(p, k).iter().zip(&cfg.x0).map(|(a, b)| a - b).collect();
                linalg::norm(&dx).powf(cfg.q)
            })
            .collect();
        let (mu, se) = (stats::mean(&z), stats::stderr(&z));
        moments.push(mu);
        t.push(vec![num(*tk), num(mu), num(se)]);
    }
    let mut out = Outcome::new("sde", Some(seed));
    out.check("finite_moments", moments.iter().all(|v| v.is_finite()), format!("{} times", grid.len()));
    out.tables.push(t);
    if cfg.write_ensemble {
        out.blobs.push(("solution.bin".into(), encode_ensemble(&x)));
    }
    out.report = serde_json::json!({ "q": cfg.q, "times": grid, "moments": moments, "two_driver": cfg.second.is_some() });
    Ok(out)
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum Experiment {
    /// Identical start and step: the difference must vanish bitwise.
    Identical { step: f64 },
    /// Steps `2^{−k}` against `2^{−k−1}` from the same start.
    StepLadder { ks: Vec<i32> },
    /// Starts differing by `ε` along `axis`, one step size.
    Perturbation {
        step: f64,
        eps: Vec<f64>,
        #[serde(default)]
        axis: usize,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct UniquenessConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    driver: DriverConfig,
    coefficient: Source<CoefficientField>,
    horizon: f64,
    x0: Vec<f64>,
    q: f64,
    n_paths: usize,
    experiment: Experiment,
    #[serde(default = "levels")]
    maximal_levels: usize,
    #[serde(default = "ell_paths")]
    ell_paths: usize,
    #[serde(default = "resamples")]
    bootstrap_resamples: usize,
}

fn levels() -> usize {
    6
}
fn ell_paths() -> usize {
    50
}
fn resamples() -> usize {
    200
}

pub fn run_uniqueness(raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: UniquenessConfig = config::parse(raw)?;
    let tol = cfg.tolerances.resolve(&[("perturbation_max_min", 5.0)])?;
    let seed = config::require_seed(seed, cfg.seed)?;
    let (spec, _, _) = cfg.driver.build(base)?;
    let field = cfg.coefficient.resolve(base)?;
    let make = |step_x: f64, step_y: f64, y0: Vec<f64>| CouplingConfig {
        horizon: cfg.horizon,
        step_x,
        step_y,
        x0: cfg.x0.clone(),
        y0,
        q: cfg.q,
        n_paths: cfg.n_paths,
        seed,
        maximal_levels: cfg.maximal_levels,
        ell_paths: cfg.ell_paths,
        bootstrap_resamples: cfg.bootstrap_resamples,
    };
    let mut t = Table::new("coupling", &["case", "parameter", "time", "moment", "stderr", "ell_mean", "ell_max"]);
    let mut out = Outcome::new("uniqueness", Some(seed));
    let mut reports = Vec::new();
    let push = |t: &mut Table, case: &str, param: f64, r: &stablelike::sde::CouplingReport| {
        for i in 0..r.times.len() {
            t.push(vec![case.into(), num(param), num(r.times[i]), num(r.moments[i]), num(r.stderr[i]), num(r.ell_mean[i]), num(r.ell_max[i])]);
        }
    };
    match &cfg.experiment {
        Experiment::Identical { step } => {
            let r = coupled_uniqueness_experiment(&field, &spec, &make(*step, *step, cfg.x0.clone()))?;
            push(&mut t, "identical", *step, &r);
            out.check("identically_zero", r.identically_zero, "X − Y compared bitwise on every path and time");
            out.check("ell_monotone", r.ell_monotone, "ℓ_t non-decreasing on telemetry paths");
            reports.push(serde_json::to_value(&r).expect("json"));
        }
        Experiment::StepLadder { ks } => {
            if ks.len() < 2 {
                return Err(config::bad("step ladder needs at least two levels"));
            }
            let mut finals = Vec::new();
            for k in ks {
                let h = 2f64.powi(-k);
                let r = coupled_uniqueness_experiment(&field, &spec, &make(h, h / 2.0, cfg.x0.clone()))?;
                push(&mut t, "step_ladder", h, &r);
                finals.push(*r.moments.last().expect("non-empty"));
                reports.push(serde_json::to_value(&r).expect("json"));
            }
            let dec = finals.windows(2).all(|w| w[1] < w[0]);
            out.check("monotone_decrease", dec, format!("E|Z_T|^q over the ladder: {finals:?}"));
        }
        Experiment::Perturbation { step, eps, axis } => {
            if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) || *axis >= cfg.x0.len() {
                return Err(config::bad("perturbation needs two or more positive ε and a valid axis"));
            }
            let mut ratios = Vec::new();
            for e in eps {
                let mut y0 = cfg.x0.clone();
                y0[*axis] += e;
                let r = coupled_uniqueness_experiment(&field, &spec, &make(*step, *step, y0))?;
                push(&mut t, "perturbation", *e, &r);
                ratios.push(r.moments.last().expect("non-empty") / e.powf(cfg.q));
                reports.push(serde_json::to_value(&r).expect("json"));
            }
            let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
            let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
            let mm = if min > 0.0 { max / min } else { f64::INFINITY };
            out.check(
                "perturbation_bounded",
                mm <= tol["perturbation_max_min"],
                format!("max/min of E|Z_T|^q/ε^q = {mm} (ratios {ratios:?})"),
            );
        }
    }
    out.tables.push(t);
    out.report = serde_json::json!({ "q": cfg.q, "runs": reports, "tolerances": tol });
    Ok(out)
}
