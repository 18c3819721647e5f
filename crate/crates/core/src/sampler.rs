//! Path samplers for stable drivers and for the state-dependent jump process.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::{self, Mat};
use crate::measures::{
    sphere_abs_moment, tail_mass, truncated_moment, LevyModel, MatrixField, SphericalMeasure, StableMeasure,
};
use crate::rng::{self, StreamRng};
use crate::symbol::radial_constant;

/// One draw with characteristic function `exp(−|u|^α)`
/// (Chambers–Mallows–Stuck, symmetric case).
pub fn symmetric_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let half_pi = std::f64::consts::FRAC_PI_2;
    let v = (rng.random::<f64>() - 0.5) * std::f64::consts::PI;
    if alpha == 1.0 {
        return v.tan();
    }
    let w: f64 = rng.sample(Exp1);
    let v = v.clamp(-half_pi + 1e-300, half_pi - 1e-300);
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// One draw of a positive stable variable with Laplace transform
/// `exp(−λ^β)`, β ∈ (0, 1) (Kanter's representation).
pub fn positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    let u = rng.random::<f64>() * std::f64::consts::PI;
    let u = u.max(1e-300);
    let e: f64 = rng.sample(Exp1);
    ((1.0 - beta) * u).sin().powf((1.0 - beta) / beta) / e.powf((1.0 - beta) / beta) * (beta * u).sin()
        / u.sin().powf(1.0 / beta)
}

/// `n` i.i.d. draws with characteristic function `exp(−t·scale·|u|^α)`.
pub fn sample_1d_symmetric_stable(alpha: f64, scale: f64, t: f64, n: usize, rng: &mut StreamRng) -> Vec<f64> {
    if scale == 0.0 || t == 0.0 {
        return vec![0.0; n];
    }
    let c = (t * scale).powf(1.0 / alpha);
    (0..n).map(|_| c * symmetric_stable(alpha, rng)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scheme {
    /// Exact increments when the measure and σ allow it, truncation otherwise.
    #[default]
    Auto,
    Exact,
    Truncated {
        #[serde(default)]
        delta: Option<f64>,
    },
}

fn default_one() -> f64 {
    1.0
}
fn default_max_jumps() -> f64 {
    1e4
}
fn default_l2_fraction() -> f64 {
    1e-3
}
fn default_channel() -> u64 {
    rng::channel::DRIVER
}

/// Driving process `L_t = ∫ b dr + ∫∫ σ_r y^{(α)} Ñ(dr, dy)` with jump
/// intensity `scale·ν`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriverSpec {
    pub measure: StableMeasure,
    #[serde(default = "default_one")]
    pub scale: f64,
    /// Time-dependent matrix, evaluated at x = 0.
    pub sigma: MatrixField,
    /// Drift, only used when α = 1.
    #[serde(default)]
    pub drift: Option<Vec<f64>>,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_channel")]
    pub channel: u64,
    #[serde(default = "default_max_jumps")]
    pub max_jumps_per_path: f64,
    #[serde(default = "default_l2_fraction")]
    pub l2_error_fraction: f64,
}

impl DriverSpec {
    pub fn new(measure: StableMeasure, sigma: Mat) -> Self {
        DriverSpec {
            measure,
            scale: 1.0,
            sigma: MatrixField::constant(&sigma),
            drift: None,
            scheme: Scheme::Auto,
            channel: rng::channel::DRIVER,
            max_jumps_per_path: 1e4,
            l2_error_fraction: 1e-3,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_channel(mut self, channel: u64) -> Self {
        self.channel = channel;
        self
    }

    pub fn dim(&self) -> usize {
        self.measure.dim()
    }

    fn validate(&self) -> Result<()> {
        self.measure.validate()?;
        if !(self.scale >= 0.0) {
            return Err(CoreError::InvalidInput(format!("scale {} < 0", self.scale)));
        }
        if self.sigma.dim() != self.dim() {
            return Err(CoreError::DimensionMismatch {
                expected: self.dim(),
                found: self.sigma.dim(),
            });
        }
        if self.measure.alpha == 1.0 && !self.measure.is_symmetric() {
            return Err(CoreError::UnsupportedConfiguration(
                "alpha = 1 needs a symmetric spherical measure".into(),
            ));
        }
        if let Some(b) = &self.drift {
            if b.len() != self.dim() {
                return Err(CoreError::DimensionMismatch {
                    expected: self.dim(),
                    found: b.len(),
                });
            }
        }
        Ok(())
    }

    /// Whether independent per-direction stable increments reproduce the law.
    pub fn exact_supported(&self) -> bool {
        self.sigma.as_constant().is_some()
            && match &self.measure.spherical {
                SphericalMeasure::Isotropic { .. } => true,
                s => s.symmetric_pairs().is_some(),
            }
    }

    fn drift_vec(&self) -> Vec<f64> {
        if self.measure.alpha == 1.0 {
            self.drift.clone().unwrap_or_else(|| vec![0.0; self.dim()])
        } else {
            vec![0.0; self.dim()]
        }
    }
}

/// Default cutoff: the largest δ whose discarded L² mass is within
/// `l2_fraction·T`, but never so small that a path expects more than
/// `max_jumps` retained jumps.
pub fn default_delta(measure: &StableMeasure, scale: f64, sigma_norm: f64, horizon: f64, max_jumps: f64, l2_fraction: f64) -> (f64, bool) {
    let alpha = measure.alpha;
    let mass = scale * measure.total_mass();
    if mass == 0.0 {
        return (1.0, true);
    }
    let delta_jumps = (mass * horizon / (alpha * max_jumps)).powf(1.0 / alpha);
    let delta_l2 = (l2_fraction * (2.0 - alpha) / (mass * sigma_norm.powi(2).max(1e-300))).powf(1.0 / (2.0 - alpha));
    if delta_l2 >= delta_jumps {
        (delta_l2, true)
    } else {
        (delta_jumps, false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub size: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EnsembleMeta {
    /// "exact", "truncated" or "thinning".
    pub scheme: String,
    /// Jump cutoff; infinite when no jumps are logged.
    pub delta: f64,
    pub channel: u64,
    pub driver: String,
    /// Discarded-jump L² bound `∫_{|y|≤δ}|y|²ν(dy)·T·|σ|²` (0 for exact).
    pub truncation_l2_bound: f64,
    pub l2_threshold_met: bool,
    /// Number of jump proposals and acceptances for thinned samples.
    pub proposals: u64,
    pub accepted: u64,
    /// Per-path time average of the acceptance probability, averaged.
    pub mean_acceptance_probability: f64,
    pub acceptance_probability_stderr: f64,
}

/// N paths on a common grid, states in path-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub jumps: Vec<Vec<Jump>>,
    pub seed: u64,
    pub meta: EnsembleMeta,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.jumps.len()
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let o = (path * self.times.len() + k) * self.dim;
        &self.states[o..o + self.dim]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        let n = self.times.len() * self.dim;
        &self.states[path * n..(path + 1) * n]
    }

    /// `X_{t_{k+1}} − X_{t_k}`.
    pub fn increment(&self, path: usize, k: usize) -> Vec<f64> {
        let a = self.state(path, k);
        let b = self.state(path, k + 1);
        b.iter().zip(a).map(|(x, y)| x - y).collect()
    }

    /// Marginal values of coordinate `coord` at grid index `k`.
    pub fn marginal(&self, k: usize, coord: usize) -> Vec<f64> {
        (0..self.n_paths()).map(|p| self.state(p, k)[coord]).collect()
    }

    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub(crate) fn assemble(dim: usize, times: Vec<f64>, parts: Vec<(Vec<f64>, Vec<Jump>)>, seed: u64, meta: EnsembleMeta) -> Self {
        let mut states = Vec::with_capacity(parts.len() * times.len() * dim);
        let mut jumps = Vec::with_capacity(parts.len());
        for (s, j) in parts {
            states.extend_from_slice(&s);
            jumps.push(j);
        }
        PathEnsemble {
            dim,
            times,
            states,
            jumps,
            seed,
            meta,
        }
    }
}

pub fn check_grid(times: &[f64]) -> Result<()> {
    if times.is_empty() || times[0] != 0.0 {
        return Err(CoreError::InvalidInput("time grid must start at 0".into()));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(CoreError::InvalidInput("time grid must be strictly increasing".into()));
    }
    Ok(())
}

pub fn uniform_grid(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|k| horizon * k as f64 / steps as f64).collect()
}

/// Per-step exact increment generator.
#[derive(Clone)]
pub(crate) enum ExactLaw {
    /// Independent 1D stable components along fixed directions with rates `c_i`.
    Directions { dirs: Vec<Vec<f64>>, rates: Vec<f64> },
    /// Sub-Gaussian isotropic law with rate `c`.
    SubGaussian { c: f64 },
}

pub(crate) struct ExactSampler {
    alpha: f64,
    law: ExactLaw,
    sigma: Mat,
    drift: Vec<f64>,
}

impl ExactSampler {
    pub(crate) fn new(measure: &StableMeasure, scale: f64, sigma: Mat, drift: Vec<f64>) -> Result<Self> {
        let alpha = measure.alpha;
        let k = radial_constant(alpha)?;
        let law = match &measure.spherical {
            SphericalMeasure::Isotropic { dim: 1, mass } => ExactLaw::Directions {
                dirs: vec![vec![1.0]],
                rates: vec![scale * mass * k],
            },
            SphericalMeasure::Isotropic { dim, mass } => ExactLaw::SubGaussian {
                c: scale * mass * k * sphere_abs_moment(*dim, alpha),
            },
            s => {
                let pairs = s.symmetric_pairs().ok_or_else(|| {
                    CoreError::UnsupportedConfiguration("exact sampling needs antipodal atom pairs".into())
                })?;
                ExactLaw::Directions {
                    dirs: pairs.iter().map(|p| p.0.clone()).collect(),
                    rates: pairs.iter().map(|p| 2.0 * p.1 * k * scale).collect(),
                }
            }
        };
        Ok(ExactSampler {
            alpha,
            law,
            sigma,
            drift,
        })
    }

    /// Increment over a step of length `dt`, in the driver's coordinates.
    pub(crate) fn increment(&self, dt: f64, rng: &mut StreamRng) -> Vec<f64> {
        let d = self.sigma.nrows();
        let mut z = vec![0.0; d];
        match &self.law {
            ExactLaw::Directions { dirs, rates } => {
                for (dir, c) in dirs.iter().zip(rates) {
                    let s = symmetric_stable(self.alpha, rng);
                    if *c > 0.0 {
                        linalg::axpy((dt * c).powf(1.0 / self.alpha) * s, dir, &mut z);
                    }
                }
            }
            ExactLaw::SubGaussian { c } => {
                let a = if self.alpha < 2.0 {
                    positive_stable(self.alpha / 2.0, rng)
                } else {
                    1.0
                };
                let f = (dt * c).powf(1.0 / self.alpha) * a.sqrt() * std::f64::consts::SQRT_2;
                for zi in z.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *zi = f * g;
                }
            }
        }
        let mut out = linalg::mat_vec(&self.sigma, &z);
        linalg::axpy(dt, &self.drift, &mut out);
        out
    }
}

/// Compound Poisson part of ν restricted to |y| > δ.
#[derive(Clone)]
pub(crate) struct JumpSampler {
    alpha: f64,
    delta: f64,
    rate: f64,
    spherical: SphericalMeasure,
    cumulative: Vec<f64>,
}

impl JumpSampler {
    pub(crate) fn new(measure: &StableMeasure, scale: f64, delta: f64) -> Result<Self> {
        let rate = scale * tail_mass(measure, delta)?;
        let cumulative = match &measure.spherical {
            SphericalMeasure::Atoms { atoms, .. } => {
                let total: f64 = atoms.iter().map(|a| a.weight).sum();
                let mut acc = 0.0;
                atoms
                    .iter()
                    .map(|a| {
                        acc += a.weight / total;
                        acc
                    })
                    .collect()
            }
            _ => Vec::new(),
        };
        Ok(JumpSampler {
            alpha: measure.alpha,
            delta,
            rate,
            spherical: measure.spherical.clone(),
            cumulative,
        })
    }

    /// Sorted event times in (a, b].
    pub(crate) fn event_times(&self, a: f64, b: f64, rng: &mut StreamRng) -> Vec<f64> {
        let mean = self.rate * (b - a);
        if mean <= 0.0 {
            return Vec::new();
        }
        let n = Poisson::new(mean).map(|p| p.sample(rng)).unwrap_or(0.0) as usize;
        let mut ts: Vec<f64> = (0..n).map(|_| a + (b - a) * (1.0 - rng.random::<f64>())).collect();
        ts.sort_by(f64::total_cmp);
        ts
    }

    /// Jump `y = rθ` with `|y| > δ` drawn from the normalized restriction.
    pub(crate) fn jump(&self, rng: &mut StreamRng) -> Vec<f64> {
        let u = 1.0 - rng.random::<f64>();
        let r = self.delta * u.powf(-1.0 / self.alpha);
        let dir = match &self.spherical {
            SphericalMeasure::Atoms { atoms, .. } => {
                let v: f64 = rng.random();
                let i = self.cumulative.partition_point(|c| *c < v).min(atoms.len() - 1);
                atoms[i].direction.clone()
            }
            SphericalMeasure::Isotropic { dim, .. } => loop {
                let g: Vec<f64> = (0..*dim).map(|_| rng.sample(StandardNormal)).collect();
                let n = linalg::norm(&g);
                if n > 0.0 {
                    break g.iter().map(|x| x / n).collect::<Vec<f64>>();
                }
            },
        };
        dir.iter().map(|x| x * r).collect()
    }
}

/// Mean drift that keeps the truncated driver consistent with the
/// compensator convention: minus the large-jump mean for α > 1, plus the
/// small-jump mean for α < 1. Zero for symmetric measures.
pub(crate) fn truncation_drift(measure: &StableMeasure, scale: f64, delta: f64) -> Vec<f64> {
    let alpha = measure.alpha;
    let m1 = measure.spherical.first_moment();
    let f = if alpha > 1.0 {
        -scale * delta.powf(1.0 - alpha) / (alpha - 1.0)
    } else if alpha < 1.0 {
        scale * delta.powf(1.0 - alpha) / (1.0 - alpha)
    } else {
        0.0
    };
    m1.iter().map(|v| v * f).collect()
}

/// Sample the driver on `times`.
pub fn sample_driver(spec: &DriverSpec, times: &[f64], n_paths: usize, seed: u64) -> Result<PathEnsemble> {
    spec.validate()?;
    check_grid(times)?;
    let d = spec.dim();
    let horizon = *times.last().unwrap();
    let use_exact = match spec.scheme {
        Scheme::Exact => {
            if !spec.exact_supported() {
                return Err(CoreError::UnsupportedConfiguration(
                    "exact scheme needs constant sigma and a symmetric or isotropic measure".into(),
                ));
            }
            true
        }
        Scheme::Auto => spec.exact_supported(),
        Scheme::Truncated { .. } => false,
    };
    let drift = spec.drift_vec();
    if use_exact {
        let sigma = spec.sigma.as_constant().unwrap();
        let ex = ExactSampler::new(&spec.measure, spec.scale, sigma, drift)?;
        let parts: Vec<(Vec<f64>, Vec<Jump>)> = (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let mut r = rng::stream(seed, spec.channel, p as u64);
                let mut s = Vec::with_capacity(times.len() * d);
                let mut x = vec![0.0; d];
                s.extend_from_slice(&x);
                for w in times.windows(2) {
                    let inc = ex.increment(w[1] - w[0], &mut r);
                    linalg::axpy(1.0, &inc, &mut x);
                    s.extend_from_slice(&x);
                }
                (s, Vec::new())
            })
            .collect();
        let meta = EnsembleMeta {
            scheme: "exact".into(),
            delta: f64::INFINITY,
            channel: spec.channel,
            driver: describe(spec),
            l2_threshold_met: true,
            ..Default::default()
        };
        return Ok(PathEnsemble::assemble(d, times.to_vec(), parts, seed, meta));
    }
    let sig_norm = (0..times.len())
        .map(|k| linalg::operator_norm(&spec.sigma.eval(times[k], &vec![0.0; d])))
        .fold(0.0, f64::max);
    let (delta, met) = match spec.scheme {
        Scheme::Truncated { delta: Some(dl) } => {
            if !(dl > 0.0) {
                return Err(CoreError::InvalidInput(format!("cutoff δ = {dl} must be positive")));
            }
            let l2 = truncated_moment(&spec.measure, dl, 2.0)? * spec.scale * horizon * sig_norm.powi(2);
            (dl, l2 <= spec.l2_error_fraction * horizon)
        }
        _ => default_delta(
            &spec.measure,
            spec.scale,
            sig_norm,
            horizon,
            spec.max_jumps_per_path,
            spec.l2_error_fraction,
        ),
    };
    let js = JumpSampler::new(&spec.measure, spec.scale, delta)?;
    let comp = truncation_drift(&spec.measure, spec.scale, delta);
    let zero = vec![0.0; d];
    let parts: Vec<(Vec<f64>, Vec<Jump>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(seed, spec.channel, p as u64);
            let mut s = Vec::with_capacity(times.len() * d);
            let mut jumps = Vec::new();
            let mut x = vec![0.0; d];
            s.extend_from_slice(&x);
            for w in times.windows(2) {
                for t in js.event_times(w[0], w[1], &mut r) {
                    let y = js.jump(&mut r);
                    let j = linalg::mat_vec(&spec.sigma.eval(t, &zero), &y);
                    linalg::axpy(1.0, &j, &mut x);
                    jumps.push(Jump { time: t, size: j });
                }
                let dt = w[1] - w[0];
                let sm = spec.sigma.eval(0.5 * (w[0] + w[1]), &zero);
                let c = linalg::mat_vec(&sm, &comp);
                linalg::axpy(dt, &c, &mut x);
                linalg::axpy(dt, &drift, &mut x);
                s.extend_from_slice(&x);
            }
            (s, jumps)
        })
        .collect();
    let meta = EnsembleMeta {
        scheme: "truncated".into(),
        delta,
        channel: spec.channel,
        driver: describe(spec),
        truncation_l2_bound: truncated_moment(&spec.measure, delta, 2.0)? * spec.scale * horizon * sig_norm.powi(2),
        l2_threshold_met: met,
        ..Default::default()
    };
    Ok(PathEnsemble::assemble(d, times.to_vec(), parts, seed, meta))
}

fn describe(spec: &DriverSpec) -> String {
    format!(
        "alpha={} dim={} mass={} scale={} sigma={:?}",
        spec.measure.alpha,
        spec.dim(),
        spec.measure.total_mass(),
        spec.scale,
        spec.sigma
    )
}

/// Options for [`thinning_sample`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThinningOpts {
    /// Cutoff for the excess component; default from the jump budget.
    #[serde(default)]
    pub delta: Option<f64>,
    #[serde(default = "default_max_jumps")]
    pub max_jumps_per_path: f64,
}

impl Default for ThinningOpts {
    fn default() -> Self {
        ThinningOpts {
            delta: None,
            max_jumps_per_path: 1e4,
        }
    }
}

/// State-dependent jump process with intensity `m(t, X₋)·base`, written as
/// `m_min·base` plus the thinned excess `(m − m_min)·base`. σ is frozen over
/// each step for the first component and taken at the pre-jump state for the
/// excess jumps.
pub fn thinning_sample(model: &LevyModel, x0: &[f64], times: &[f64], n_paths: usize, seed: u64, opts: ThinningOpts) -> Result<PathEnsemble> {
    if !(model.m_min > 0.0) {
        return Err(CoreError::InvalidInput(format!("m_min = {} must be positive", model.m_min)));
    }
    model.base.validate()?;
    check_grid(times)?;
    let d = model.dim();
    if x0.len() != d {
        return Err(CoreError::DimensionMismatch { expected: d, found: x0.len() });
    }
    let alpha = model.alpha();
    let horizon = *times.last().unwrap();
    let excess = model.m_max - model.m_min;
    let delta = match opts.delta {
        Some(dl) if dl > 0.0 => dl,
        Some(dl) => return Err(CoreError::InvalidInput(format!("cutoff δ = {dl} must be positive"))),
        None => {
            let mass = excess.max(model.m_min) * model.base.total_mass();
            if mass > 0.0 {
                (mass * horizon / (alpha * opts.max_jumps_per_path)).powf(1.0 / alpha)
            } else {
                1.0
            }
        }
    };
    let exact_first = match &model.base.spherical {
        SphericalMeasure::Isotropic { .. } => true,
        s => s.symmetric_pairs().is_some(),
    };
    let first_exact = if exact_first {
        Some(ExactSampler::new(&model.base, model.m_min, linalg::identity(d), vec![0.0; d])?)
    } else {
        None
    };
    let first_jumps = if exact_first {
        None
    } else {
        Some(JumpSampler::new(&model.base, model.m_min, delta)?)
    };
    let first_comp = truncation_drift(&model.base, model.m_min, delta);
    let excess_sampler = if excess > 0.0 {
        Some(JumpSampler::new(&model.base, excess, delta)?)
    } else {
        None
    };
    let unit_comp = truncation_drift(&model.base, 1.0, delta);
    let use_drift = alpha == 1.0;
    let prob = |t: f64, x: &[f64]| -> f64 {
        if excess > 0.0 {
            ((model.modulation.eval(t, x) - model.m_min) / excess).clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    struct PathOut {
        states: Vec<f64>,
        jumps: Vec<Jump>,
        proposals: u64,
        accepted: u64,
        mean_prob: f64,
    }
    let outs: Vec<PathOut> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r = rng::stream(seed, rng::channel::DRIVER, p as u64);
            let mut rt = rng::stream(seed, rng::channel::THINNING, p as u64);
            let mut s = Vec::with_capacity(times.len() * d);
            let mut jumps = Vec::new();
            let mut x = x0.to_vec();
            s.extend_from_slice(&x);
            let (mut proposals, mut accepted) = (0u64, 0u64);
            let mut prob_int = 0.0;
            let mut p_prev = prob(times[0], &x);
            for w in times.windows(2) {
                let (a, b) = (w[0], w[1]);
                let dt = b - a;
                let xk = x.clone();
                let sk = model.sigma.eval(a, &xk);
                // first component increment in y-space
                let mut l1 = vec![0.0; d];
                if let Some(ex) = &first_exact {
                    l1 = ex.increment(dt, &mut r);
                } else if let Some(js) = &first_jumps {
                    for _ in js.event_times(a, b, &mut r) {
                        let y = js.jump(&mut r);
                        linalg::axpy(1.0, &y, &mut l1);
                    }
                    linalg::axpy(dt, &first_comp, &mut l1);
                }
                if let Some(js) = &excess_sampler {
                    for t in js.event_times(a, b, &mut rt) {
                        let y = js.jump(&mut rt);
                        let u: f64 = rt.random();
                        proposals += 1;
                        if u < prob(t, &x) {
                            accepted += 1;
                            let j = linalg::mat_vec(&model.sigma.eval(t, &x), &y);
                            linalg::axpy(1.0, &j, &mut x);
                            jumps.push(Jump { time: t, size: j });
                        }
                    }
                    // compensator of the excess part for α > 1 (zero when symmetric)
                    let pk = prob(a, &xk) * excess;
                    let c = linalg::mat_vec(&sk, &unit_comp);
                    linalg::axpy(pk * dt, &c, &mut x);
                }
                let inc = linalg::mat_vec(&sk, &l1);
                linalg::axpy(1.0, &inc, &mut x);
                if use_drift {
                    let bvec = model.drift.eval(a, &xk);
                    linalg::axpy(dt, &bvec, &mut x);
                }
                let p_next = prob(b, &x);
                prob_int += 0.5 * (p_prev + p_next) * dt;
                p_prev = p_next;
                s.extend_from_slice(&x);
            }
            PathOut {
                states: s,
                jumps,
                proposals,
                accepted,
                mean_prob: if horizon > 0.0 { prob_int / horizon } else { 0.0 },
            }
        })
        .collect();
    let proposals: u64 = outs.iter().map(|o| o.proposals).sum();
    let accepted: u64 = outs.iter().map(|o| o.accepted).sum();
    let probs: Vec<f64> = outs.iter().map(|o| o.mean_prob).collect();
    let meta = EnsembleMeta {
        scheme: "thinning".into(),
        delta,
        channel: rng::channel::DRIVER,
        driver: format!("thinned model alpha={} m in [{}, {}]", alpha, model.m_min, model.m_max),
        truncation_l2_bound: truncated_moment(&model.base, delta, 2.0)? * excess * horizon,
        l2_threshold_met: true,
        proposals,
        accepted,
        mean_acceptance_probability: crate::stats::mean(&probs),
        acceptance_probability_stderr: crate::stats::stderr(&probs),
    };
    let parts = outs.into_iter().map(|o| (o.states, o.jumps)).collect();
    Ok(PathEnsemble::assemble(d, times.to_vec(), parts, seed, meta))
}
