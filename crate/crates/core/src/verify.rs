//! Monte Carlo checks of the martingale problem and of occupation estimates
//! on sampled ensembles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::generator::{apply_l, GeneratorTable, Operator, Tail, TestFunction};
use crate::measures::LevyModel;
use crate::quad::{integrate, QuadOpts};
use crate::sampler::PathEnsemble;
use crate::stats;

/// Bounded continuous functional of finitely many marginals `X_{s_i}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Conditioning {
    One,
    /// `exp(−|X_s − c|² / (2w²))`
    Gaussian { time: f64, center: Vec<f64>, width: f64 },
    /// `cos(ξ·X_s)`
    Cosine { time: f64, xi: Vec<f64> },
    Product { factors: Vec<Conditioning> },
}

impl Conditioning {
    pub fn describe(&self) -> String {
        match self {
            Conditioning::One => "1".into(),
            Conditioning::Gaussian { time, center, width } => {
                format!("gauss(X_{time}; c={center:?}, w={width})")
            }
            Conditioning::Cosine { time, xi } => format!("cos({xi:?}·X_{time})"),
            Conditioning::Product { factors } => factors.iter().map(|f| f.describe()).collect::<Vec<_>>().join("·"),
        }
    }

    fn times(&self, out: &mut Vec<f64>) {
        match self {
            Conditioning::One => {}
            Conditioning::Gaussian { time, .. } | Conditioning::Cosine { time, .. } => out.push(*time),
            Conditioning::Product { factors } => factors.iter().for_each(|f| f.times(out)),
        }
    }

    /// Every marginal used must be a grid time no later than `t1`.
    pub fn validate(&self, ens: &PathEnsemble, t1: f64) -> Result<()> {
        let mut ts = Vec::new();
        self.times(&mut ts);
        for s in ts {
            if s > t1 + 1e-12 || ens.index_of_time(s).is_none() {
                return Err(CoreError::InvalidInput(format!(
                    "conditioning time {s} must be a grid time ≤ t1 = {t1}"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, ens: &PathEnsemble, path: usize) -> f64 {
        match self {
            Conditioning::One => 1.0,
            Conditioning::Gaussian { time, center, width } => {
                let x = ens.state(path, ens.index_of_time(*time).unwrap_or(0));
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                (-0.5 * r2 / (width * width)).exp()
            }
            Conditioning::Cosine { time, xi } => {
                let x = ens.state(path, ens.index_of_time(*time).unwrap_or(0));
                x.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>().cos()
            }
            Conditioning::Product { factors } => factors.iter().map(|f| f.eval(ens, path)).product(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleResidualReport {
    pub test_function: String,
    pub t1: f64,
    pub t2: f64,
    pub conditioning: String,
    pub residual: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// Quadrature plus interpolation error of `𝓛φ`, times `(t2 − t1)·E|G|`.
    pub generator_error_budget: f64,
    /// `|E[G·(I_h − I_{2h})]|` for the trapezoid time integral.
    pub time_discretization_budget: f64,
    pub consistent: bool,
}

impl MartingaleResidualReport {
    pub fn z_score(&self) -> f64 {
        if self.stderr > 0.0 {
            self.residual.abs() / self.stderr
        } else if self.residual == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

fn grid_index(ens: &PathEnsemble, t: f64, name: &str) -> Result<usize> {
    ens.index_of_time(t)
        .ok_or_else(|| CoreError::InvalidInput(format!("{name} = {t} is not a grid time")))
}

/// Evaluates `𝓛φ` at many states, through a cubic table when the model is
/// time-homogeneous in d ≤ 2.
struct GeneratorCache {
    table: Option<GeneratorTable>,
    error: f64,
}

impl GeneratorCache {
    fn new(model: &LevyModel, phi: &TestFunction, ens: &PathEnsemble, k1: usize, k2: usize) -> Result<Self> {
        let d = ens.dim;
        let n = ens.n_paths();
        if !model.is_time_homogeneous() || d > 2 || n * (k2 - k1 + 1) < 20_000 {
            return Ok(GeneratorCache { table: None, error: 0.0 });
        }
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for j in 0..d {
            let mut v: Vec<f64> = (k1..=k2)
                .flat_map(|k| (0..n).map(move |p| (p, k)))
                .map(|(p, k)| ens.state(p, k)[j])
                .collect();
            v.sort_by(f64::total_cmp);
            let q = |u: f64| v[((v.len() - 1) as f64 * u) as usize];
            let (a, b) = (q(0.005), q(0.995));
            let pad = 0.05 * (b - a) + phi.length_scale;
            lo[j] = a - pad;
            hi[j] = b + pad;
        }
        // keep the node spacing below a tenth of the length scale
        let span = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(0.0, f64::max);
        let per_axis = if d == 1 { 4000 } else { 160 };
        let nodes = ((10.0 * span / phi.length_scale).ceil() as usize).clamp(64, per_axis);
        let table = GeneratorTable::build(model, phi, Operator::L, &lo, &hi, nodes)?;
        let error = table.max_quadrature_error + table.interpolation_error;
        Ok(GeneratorCache {
            table: Some(table),
            error,
        })
    }

    fn eval(&self, model: &LevyModel, phi: &TestFunction, t: f64, x: &[f64]) -> Result<(f64, f64)> {
        match &self.table {
            Some(tab) => Ok((tab.eval(x)?, self.error)),
            None => {
                let g = apply_l(model, phi, t, x)?;
                Ok((g.value, g.error))
            }
        }
    }
}

/// Estimates `E[G·(M^φ_{t2} − M^φ_{t1})]` where
/// `M^φ_t = φ(X_t) − ∫₀ᵗ 𝓛φ(X_r) dr`, with the time integral by the
/// trapezoid rule on the grid.
pub fn martingale_residual(
    ens: &PathEnsemble,
    model: &LevyModel,
    phi: &TestFunction,
    t1: f64,
    t2: f64,
    g: &Conditioning,
) -> Result<MartingaleResidualReport> {
    if !(t1 < t2) {
        return Err(CoreError::InvalidInput("need t1 < t2".into()));
    }
    if phi.dim != ens.dim || model.dim() != ens.dim {
        return Err(CoreError::DimensionMismatch {
            expected: ens.dim,
            found: phi.dim,
        });
    }
    let k1 = grid_index(ens, t1, "t1")?;
    let k2 = grid_index(ens, t2, "t2")?;
    g.validate(ens, t1)?;
    let cache = GeneratorCache::new(model, phi, ens, k1, k2)?;
    let times = &ens.times;
    let coarse = (k2 - k1) % 2 == 0 && k2 - k1 >= 2;

    let rows: Vec<(f64, f64, f64, f64)> = (0..ens.n_paths())
        .into_par_iter()
        .map(|p| -> Result<(f64, f64, f64, f64)> {
            let gv = g.eval(ens, p);
            let mut lv = Vec::with_capacity(k2 - k1 + 1);
            let mut err: f64 = 0.0;
            for k in k1..=k2 {
                let (v, e) = cache.eval(model, phi, times[k], ens.state(p, k))?;
                lv.push(v);
                err = err.max(e);
            }
            let mut fine = 0.0;
            for k in 0..k2 - k1 {
                fine += 0.5 * (lv[k] + lv[k + 1]) * (times[k1 + k + 1] - times[k1 + k]);
            }
            let mut diff = 0.0;
            if coarse {
                let mut c = 0.0;
                for k in (0..k2 - k1).step_by(2) {
                    c += 0.5 * (lv[k] + lv[k + 2]) * (times[k1 + k + 2] - times[k1 + k]);
                }
                diff = fine - c;
            }
            let dm = phi.value(ens.state(p, k2)) - phi.value(ens.state(p, k1)) - fine;
            Ok((gv * dm, gv * diff, gv.abs(), err))
        })
        .collect::<Result<_>>()?;

    let r: Vec<f64> = rows.iter().map(|v| v.0).collect();
    let diffs: Vec<f64> = rows.iter().map(|v| v.1).collect();
    let mean_abs_g = stats::mean(&rows.iter().map(|v| v.2).collect::<Vec<_>>());
    let gen_err = rows.iter().map(|v| v.3).fold(0.0, f64::max);
    let residual = stats::mean(&r);
    let stderr = stats::stderr(&r);
    let generator_error_budget = gen_err * (t2 - t1) * mean_abs_g;
    let time_discretization_budget = stats::mean(&diffs).abs();
    let consistent = residual.abs() <= 4.0 * stderr + generator_error_budget + time_discretization_budget;
    Ok(MartingaleResidualReport {
        test_function: phi.name.clone(),
        t1,
        t2,
        conditioning: g.describe(),
        residual,
        stderr,
        n_paths: ens.n_paths(),
        generator_error_budget,
        time_discretization_budget,
        consistent,
    })
}

/// The model with its jump intensity multiplied by `factor`; used as a
/// deliberately wrong generator.
pub fn perturbed_model(model: &LevyModel, factor: f64) -> LevyModel {
    let mut m = model.clone();
    m.base = m.base.scaled(factor);
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupationEstimate {
    pub value: f64,
    pub stderr: f64,
}

/// `E ∫_{t1}^{t2} f(r, X_r) dr` by the trapezoid rule on the grid, with a
/// bootstrap standard error.
pub fn occupation_estimate(
    ens: &PathEnsemble,
    f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    t1: f64,
    t2: f64,
    resamples: usize,
) -> Result<OccupationEstimate> {
    let k1 = grid_index(ens, t1, "t1")?;
    let k2 = grid_index(ens, t2, "t2")?;
    if k2 < k1 {
        return Err(CoreError::InvalidInput("need t1 ≤ t2".into()));
    }
    let per_path = path_integrals(ens, f, k1, k2);
    Ok(OccupationEstimate {
        value: stats::mean(&per_path),
        stderr: stats::bootstrap_stderr(&per_path, resamples, ens.seed),
    })
}

fn path_integrals(ens: &PathEnsemble, f: &(dyn Fn(f64, &[f64]) -> f64 + Sync), k1: usize, k2: usize) -> Vec<f64> {
    let t = &ens.times;
    (0..ens.n_paths())
        .into_par_iter()
        .map(|p| {
            let mut s = 0.0;
            let mut prev = f(t[k1], ens.state(p, k1));
            for k in k1..k2 {
                let next = f(t[k + 1], ens.state(p, k + 1));
                s += 0.5 * (prev + next) * (t[k + 1] - t[k]);
                prev = next;
            }
            s
        })
        .collect()
}

/// Parameters entering the integrability threshold for the occupation
/// estimate: `m` is the dimension of the coefficient parameter, the γ's are
/// the Hölder exponents of σ and ν in that parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrylovHypothesis {
    pub d: usize,
    pub m: usize,
    pub alpha: f64,
    pub alpha_bar: Option<f64>,
    pub gamma_sigma: f64,
    pub gamma_nu: f64,
}

impl KrylovHypothesis {
    /// Constant coefficients: the Hölder terms drop out (γ = 1).
    pub fn constant_coefficients(d: usize, alpha: f64) -> Self {
        KrylovHypothesis {
            d,
            m: d,
            alpha,
            alpha_bar: None,
            gamma_sigma: 1.0,
            gamma_nu: 1.0,
        }
    }

    pub fn p_threshold(&self) -> f64 {
        let d = self.d as f64;
        let a1 = self.alpha.min(1.0);
        let mut p = (self.m as f64 / (self.gamma_sigma * a1).min(self.gamma_nu))
            .max(d / self.alpha + 1.0)
            .max(d / a1);
        if let Some(ab) = self.alpha_bar {
            p = p.max(d / ab);
        }
        p
    }

    /// Band `[1 − β_max/α − 1/p, 1 − β_min/α − 1/p]` of window exponents for
    /// β ∈ (d/p, α(1 − 1/p)).
    pub fn exponent_band(&self, p: f64) -> (f64, f64) {
        let beta_min = self.d as f64 / p;
        let beta_max = self.alpha * (1.0 - 1.0 / p);
        (1.0 - beta_max / self.alpha - 1.0 / p, 1.0 - beta_min / self.alpha - 1.0 / p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrylovRow {
    pub lambda: f64,
    pub t1: f64,
    pub t2: f64,
    pub occupation: f64,
    pub stderr: f64,
    pub lp_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KrylovReport {
    pub p: f64,
    pub p_threshold: f64,
    pub in_theory: bool,
    /// Window `[t1, t2]` used for the λ ladder.
    pub window: (f64, f64),
    pub rows: Vec<KrylovRow>,
    /// Ratios over the λ ladder on the main window.
    pub ratios: Vec<f64>,
    pub max_min_ratio: f64,
    pub mann_kendall_p: f64,
    /// Fitted slope of `log E∫f` against `log(t2 − t1)` for λ = first ladder entry.
    pub window_exponent: f64,
    pub window_exponent_stderr: f64,
    /// Theoretical band of window exponents.
    pub exponent_band: (f64, f64),
    /// Largest observed ratio, a lower estimate of the constant.
    pub constant_estimate: f64,
}

/// `∫ g` over a box by nested adaptive quadrature.
pub fn box_integral(g: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], rel: f64) -> Result<f64> {
    fn rec(g: &dyn Fn(&[f64]) -> f64, lo: &[f64], hi: &[f64], prefix: &[f64], rel: f64) -> Result<f64> {
        let k = prefix.len();
        if k == lo.len() {
            return Ok(g(prefix));
        }
        let fail = std::cell::RefCell::new(None);
        let res = integrate(
            |x| {
                let mut p = prefix.to_vec();
                p.push(x);
                rec(g, lo, hi, &p, rel).unwrap_or_else(|e| {
                    *fail.borrow_mut() = Some(e);
                    0.0
                })
            },
            lo[k],
            hi[k],
            QuadOpts::tol(0.0, rel),
        );
        if let Some(e) = fail.into_inner() {
            return Err(e);
        }
        Ok(res.require("box integral")?.value)
    }
    rec(g, lo, hi, &[], rel)
}

/// `‖f‖_{L^p(R^d)}` over the declared support box.
pub fn lp_norm(f: &TestFunction, p: f64) -> Result<f64> {
    if f.sup_norm == 0.0 {
        return Ok(0.0);
    }
    let (c, r) = f
        .support
        .clone()
        .ok_or_else(|| CoreError::InvalidInput("L^p norm needs a declared support".into()))?;
    let lo: Vec<f64> = c.iter().map(|v| v - r).collect();
    let hi: Vec<f64> = c.iter().map(|v| v + r).collect();
    let g = |x: &[f64]| f.value(x).abs().powf(p);
    Ok(box_integral(&g, &lo, &hi, 1e-10)?.powf(1.0 / p))
}

/// Dilate a test function: `x ↦ f(λx)`.
pub fn dilate(f: &TestFunction, lambda: f64) -> TestFunction {
    let (f0, g0, h0) = (f.f.clone(), f.grad.clone(), f.hess.clone());
    let sc = move |x: &[f64]| x.iter().map(|v| lambda * v).collect::<Vec<f64>>();
    let sc2 = sc.clone();
    let sc3 = sc.clone();
    TestFunction {
        name: format!("{}(λ={lambda})", f.name),
        dim: f.dim,
        f: std::sync::Arc::new(move |x| f0(&sc(x))),
        grad: std::sync::Arc::new(move |x| g0(&sc2(x)).into_iter().map(|v| lambda * v).collect()),
        hess: std::sync::Arc::new(move |x| h0(&sc3(x)).into_iter().map(|v| lambda * lambda * v).collect()),
        length_scale: f.length_scale / lambda,
        support: f.support.as_ref().map(|(c, r)| (c.iter().map(|v| v / lambda).collect(), r / lambda)),
        sup_norm: f.sup_norm,
        smoothness: f.smoothness,
        tail: match &f.tail {
            Tail::Compact { center, radius } => Tail::Compact {
                center: center.iter().map(|v| v / lambda).collect(),
                radius: radius / lambda,
            },
            Tail::Constant(c) => Tail::Constant(*c),
            _ => Tail::Bounded { sup: f.sup_norm },
        },
    }
}

/// Occupation ratios `E∫f_λ(X_r)dr / ‖f_λ‖_{L^p([0,T]×R^d)}` over a λ ladder
/// on the first window, plus the window-length exponent for λ = `lambdas[0]`
/// over all windows. `f` must be nonnegative with declared support.
pub fn krylov_ratio_sweep(
    ens: &PathEnsemble,
    f: &TestFunction,
    p: f64,
    lambdas: &[f64],
    windows: &[(f64, f64)],
    hyp: &KrylovHypothesis,
) -> Result<KrylovReport> {
    if lambdas.is_empty() || windows.is_empty() {
        return Err(CoreError::InvalidInput("need at least one λ and one window".into()));
    }
    if f.dim != ens.dim {
        return Err(CoreError::DimensionMismatch {
            expected: ens.dim,
            found: f.dim,
        });
    }
    let horizon = *ens.times.last().unwrap();
    let threshold = hyp.p_threshold();
    let mut rows = Vec::new();
    let run = |lambda: f64, t1: f64, t2: f64| -> Result<KrylovRow> {
        let fl = dilate(f, lambda);
        let space = lp_norm(&fl, p)?;
        let norm = horizon.powf(1.0 / p) * space;
        let g = |_t: f64, x: &[f64]| fl.value(x);
        let occ = occupation_estimate(ens, &g, t1, t2, 200)?;
        let ratio = if norm > 0.0 { occ.value / norm } else { 0.0 };
        Ok(KrylovRow {
            lambda,
            t1,
            t2,
            occupation: occ.value,
            stderr: occ.stderr,
            lp_norm: norm,
            ratio,
        })
    };
    let (w1, w2) = windows[0];
    for &l in lambdas {
        rows.push(run(l, w1, w2)?);
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
    let mut occ_w = vec![rows[0].occupation];
    let mut len_w = vec![w2 - w1];
    for &(a, b) in &windows[1..] {
        let r = run(lambdas[0], a, b)?;
        occ_w.push(r.occupation);
        len_w.push(b - a);
        rows.push(r);
    }
    let (window_exponent, window_exponent_stderr) = if len_w.len() >= 2 && occ_w.iter().all(|v| *v > 0.0) {
        let fit = stats::loglog_fit(&len_w, &occ_w);
        (fit.slope, fit.slope_stderr)
    } else {
        (f64::NAN, f64::NAN)
    };
    let mx = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mn = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(KrylovReport {
        p,
        p_threshold: threshold,
        in_theory: p > threshold,
        window: (w1, w2),
        max_min_ratio: if mn > 0.0 { mx / mn } else if mx == 0.0 { 1.0 } else { f64::INFINITY },
        mann_kendall_p: stats::mann_kendall(&ratios).p_value,
        ratios,
        window_exponent,
        window_exponent_stderr,
        exponent_band: hyp.exponent_band(p),
        constant_estimate: rows.iter().map(|r| r.ratio).fold(0.0, f64::max),
        rows,
    })
}
