//! Periodic spectral solver for the resolvent equation
//! `∂ₜu = (𝓛 − λ)u + f`, `u(0) = 0`, and its Feynman–Kac counterpart.
//!
//! Fields live on the torus `[0, L)^d` with `n` points per axis; the
//! operator `𝓛` acts as the multiplier `−ψ(ξ)` on wavenumbers `2πk/L`.
//! The Nyquist mode is treated as the real mode `+n/2`, so test fields are
//! expected to be band-limited below it.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::Mat;
use crate::measures::StableMeasure;
use crate::quad::gauss_legendre;
use crate::rng::{self, channel};
use crate::sampler::{check_grid, sample_driver, DriverSpec};
use crate::stats;
use crate::symbol::stable_symbol;

/// Real field on a periodic grid, row-major with axis 0 slowest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridField {
    pub d: usize,
    pub n: usize,
    pub period: f64,
    values: Vec<f64>,
    #[serde(skip)]
    spectrum: OnceLock<Vec<Complex64>>,
}

impl PartialEq for GridField {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.n == other.n && self.period == other.period && self.values == other.values
    }
}

fn fft_nd(data: &mut [Complex64], d: usize, n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        for start in 0..total {
            if (start / stride) % n != 0 {
                continue;
            }
            for (i, v) in line.iter_mut().enumerate() {
                *v = data[start + i * stride];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (i, v) in line.iter().enumerate() {
                data[start + i * stride] = *v;
            }
        }
    }
}

impl GridField {
    pub fn new(d: usize, n: usize, period: f64, values: Vec<f64>) -> Result<Self> {
        if d == 0 || d > 3 {
            return Err(CoreError::UnsupportedConfiguration(format!("grid dimension {d} (supported: 1 to 3)")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(CoreError::InvalidInput(format!("resolution {n} must be a power of two ≥ 2")));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(CoreError::InvalidInput(format!("period {period} must be positive")));
        }
        if values.len() != n.pow(d as u32) {
            return Err(CoreError::DimensionMismatch {
                expected: n.pow(d as u32),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::InvalidInput("field values must be finite".into()));
        }
        Ok(GridField {
            d,
            n,
            period,
            values,
            spectrum: OnceLock::new(),
        })
    }

    pub fn from_fn(d: usize, n: usize, period: f64, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let size = n.checked_pow(d as u32).unwrap_or(0);
        let mut x = vec![0.0; d];
        let values = (0..size)
            .map(|i| {
                grid_point(d, n, period, i, &mut x);
                f(&x)
            })
            .collect();
        Self::new(d, n, period, values)
    }

    pub fn constant(d: usize, n: usize, period: f64, c: f64) -> Result<Self> {
        Self::from_fn(d, n, period, |_| c)
    }

    /// Random trigonometric polynomial with modes `|k_j| ≤ kmax`.
    pub fn random_bandlimited(d: usize, n: usize, period: f64, kmax: usize, seed: u64) -> Result<Self> {
        if 2 * kmax >= n {
            return Err(CoreError::InvalidInput(format!("kmax {kmax} must stay below n/2 = {}", n / 2)));
        }
        let zero = Self::constant(d, n, period, 0.0)?;
        let mut r = rng::stream(seed, channel::FIELDS, 0);
        let mut spec = vec![Complex64::new(0.0, 0.0); zero.len()];
        let mut k = vec![0i64; d];
        for (i, s) in spec.iter_mut().enumerate() {
            zero.mode_index(i, &mut k);
            if k.iter().all(|kj| kj.unsigned_abs() as usize <= kmax) {
                *s = Complex64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5) * zero.len() as f64;
            }
        }
        Self::from_spectrum(d, n, period, spec)
    }

    /// Real part of the inverse transform of an unnormalised spectrum.
    pub fn from_spectrum(d: usize, n: usize, period: f64, mut spec: Vec<Complex64>) -> Result<Self> {
        let size = spec.len();
        fft_nd(&mut spec, d, n, true);
        let values = spec.iter().map(|c| c.re / size as f64).collect();
        Self::new(d, n, period, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        (self.period / self.n as f64).powi(self.d as i32)
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        grid_point(self.d, self.n, self.period, i, &mut x);
        x
    }

    fn mode_index(&self, i: usize, k: &mut [i64]) {
        let mut rest = i;
        for j in (0..self.d).rev() {
            let ij = rest % self.n;
            rest /= self.n;
            k[j] = if ij <= self.n / 2 { ij as i64 } else { ij as i64 - self.n as i64 };
        }
    }

    /// Wavenumber `2πk/L` of flat spectral index `i`.
    pub fn wavenumber(&self, i: usize) -> Vec<f64> {
        let mut k = vec![0i64; self.d];
        self.mode_index(i, &mut k);
        k.iter().map(|kj| 2.0 * PI * *kj as f64 / self.period).collect()
    }

    pub fn wavenumbers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.wavenumber(i)).collect()
    }

    /// Unnormalised forward transform, computed once.
    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| {
            let mut data: Vec<Complex64> = self.values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
            fft_nd(&mut data, self.d, self.n, false);
            data
        })
    }

    pub fn same_grid(&self, other: &GridField) -> bool {
        self.d == other.d && self.n == other.n && self.period == other.period
    }

    fn check_grid(&self, other: &GridField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(CoreError::InvalidInput(format!(
                "grids differ: (d={}, n={}, L={}) vs (d={}, n={}, L={})",
                self.d, self.n, self.period, other.d, other.n, other.period
            )))
        }
    }

    /// Rectangle-rule `L^p` norm; `p = ∞` gives the maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().fold(0.0, |m, v| m.max(v.abs()));
        }
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.cell_volume()).powf(1.0 / p)
    }

    /// `L²` norm from the spectrum.
    pub fn spectral_l2_norm(&self) -> f64 {
        let s: f64 = self.spectrum().iter().map(|c| c.norm_sqr()).sum();
        (s * self.cell_volume() / self.len() as f64).sqrt()
    }

    pub fn apply_multiplier(&self, m: impl Fn(&[f64]) -> Complex64 + Sync) -> Result<GridField> {
        let spec: Vec<Complex64> = self
            .spectrum()
            .par_iter()
            .enumerate()
            .map(|(i, c)| c * m(&self.wavenumber(i)))
            .collect();
        Self::from_spectrum(self.d, self.n, self.period, spec)
    }

    /// Partial derivatives by the multipliers `iξ_j`.
    pub fn gradient(&self) -> Result<Vec<GridField>> {
        (0..self.d)
            .map(|j| self.apply_multiplier(|xi| Complex64::new(0.0, xi[j])))
            .collect()
    }

    pub fn linear_combination(&self, a: f64, other: &GridField, b: f64) -> Result<GridField> {
        self.check_grid(other)?;
        let v = self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect();
        Self::new(self.d, self.n, self.period, v)
    }
}

fn grid_point(d: usize, n: usize, period: f64, i: usize, x: &mut [f64]) {
    let mut rest = i;
    for j in (0..d).rev() {
        x[j] = period * (rest % n) as f64 / n as f64;
        rest /= n;
    }
}

/// `Δ^{α/2} = −(−Δ)^{α/2}` as the multiplier `−|ξ|^α`.
pub fn frac_laplacian(field: &GridField, alpha: f64) -> GridField {
    field
        .apply_multiplier(|xi| {
            let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            Complex64::new(if r == 0.0 { 0.0 } else { -r.powf(alpha) }, 0.0)
        })
        .expect("multiplier preserves the grid")
}

/// A constant-coefficient symbol `ψ(ξ)`.
#[derive(Clone)]
pub struct Symbol {
    description: String,
    eval: Arc<dyn Fn(&[f64]) -> Result<Complex64> + Send + Sync>,
}

impl std::fmt::Debug for Symbol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Symbol({})", self.description)
    }
}

impl Symbol {
    /// Symbol of `σL` for an α-stable driver `L` with the given measure.
    pub fn stable(measure: StableMeasure, sigma: Mat) -> Self {
        let description = format!("stable alpha={} measure={} sigma={:?}", measure.alpha, measure.to_json(), sigma);
        Symbol {
            description,
            eval: Arc::new(move |xi: &[f64]| Ok(stable_symbol(&measure, &sigma, xi)?.value)),
        }
    }

    /// `ψ(ξ) = c|ξ|^α`.
    pub fn fractional_laplacian(alpha: f64, c: f64) -> Self {
        Symbol {
            description: format!("{c}*|xi|^{alpha}"),
            eval: Arc::new(move |xi: &[f64]| {
                let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
                Ok(Complex64::new(if r == 0.0 { 0.0 } else { c * r.powf(alpha) }, 0.0))
            }),
        }
    }

    pub fn custom(description: &str, f: impl Fn(&[f64]) -> Result<Complex64> + Send + Sync + 'static) -> Self {
        Symbol {
            description: description.to_string(),
            eval: Arc::new(f),
        }
    }

    pub fn describe(&self) -> &str {
        &self.description
    }

    pub fn eval(&self, xi: &[f64]) -> Result<Complex64> {
        (self.eval)(xi)
    }

    /// ψ at every wavenumber of the grid, failing on `Re ψ < 0`.
    pub fn on_grid(&self, grid: &GridField) -> Result<Vec<Complex64>> {
        let vals: Vec<Complex64> = (0..grid.len())
            .into_par_iter()
            .map(|i| self.eval(&grid.wavenumber(i)))
            .collect::<Result<_>>()?;
        for (i, v) in vals.iter().enumerate() {
            // quadrature noise around zero is tolerated
            if v.re < -1e-12 * v.norm().max(1.0) {
                return Err(CoreError::InvalidSymbol {
                    mode: format!("{:?}", grid.wavenumber(i)),
                    re: v.re,
                });
            }
        }
        Ok(vals)
    }
}

/// Forcing that is constant on each interval `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseField {
    pub times: Vec<f64>,
    pub fields: Vec<GridField>,
}

impl PiecewiseField {
    pub fn new(times: Vec<f64>, fields: Vec<GridField>) -> Result<Self> {
        check_grid(&times)?;
        if fields.len() + 1 != times.len() {
            return Err(CoreError::DimensionMismatch {
                expected: times.len() - 1,
                found: fields.len(),
            });
        }
        if fields.is_empty() {
            return Err(CoreError::InvalidInput("at least one time interval is required".into()));
        }
        for f in &fields[1..] {
            fields[0].check_grid(f)?;
        }
        Ok(PiecewiseField { times, fields })
    }

    /// Sample `f(t_k, ·)` at the left end of every interval.
    pub fn sample(
        f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
        times: &[f64],
        d: usize,
        n: usize,
        period: f64,
    ) -> Result<Self> {
        check_grid(times)?;
        let fields = times[..times.len() - 1]
            .iter()
            .map(|t| GridField::from_fn(d, n, period, |x| f(*t, x)))
            .collect::<Result<_>>()?;
        Self::new(times.to_vec(), fields)
    }

    pub fn grid(&self) -> &GridField {
        &self.fields[0]
    }

    /// `(∫₀ᵀ ‖f(s)‖_p^p ds)^{1/p}`.
    pub fn lp_time_norm(&self, p: f64) -> f64 {
        self.fields
            .iter()
            .zip(self.times.windows(2))
            .map(|(f, w)| f.lp_norm(p).powf(p) * (w[1] - w[0]))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Spectral,
    FeynmanKac,
}

/// `u_λ` on a time grid. Spectral solutions carry full fields; Feynman–Kac
/// solutions carry values and standard errors at probe points.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolventSolution {
    pub times: Vec<f64>,
    pub lambda: f64,
    pub symbol: String,
    pub method: SolveMethod,
    pub fields: Vec<GridField>,
    pub probes: Vec<Vec<f64>>,
    /// `probe_values[k][j]` is `u(t_k, probes[j])`.
    pub probe_values: Vec<Vec<f64>>,
    pub probe_stderr: Vec<Vec<f64>>,
    /// `λ + ψ(ξ)` per mode for spectral solutions.
    #[serde(skip)]
    rates: Vec<Complex64>,
}

impl ResolventSolution {
    pub fn rates(&self) -> &[Complex64] {
        &self.rates
    }
}

/// `e^{−w} − 1` without cancellation for small `|w|`.
fn cexpm1_neg(w: Complex64) -> Complex64 {
    let (a, b) = (w.re, w.im);
    let em1 = (-a).exp_m1();
    let s = (0.5 * b).sin();
    // e^{−a}(cos b − i sin b) − 1
    Complex64::new(em1 * b.cos() - 2.0 * s * s, -(-a).exp() * b.sin())
}

/// `∫₀^τ e^{−zs} ds = (1 − e^{−zτ})/z`.
pub fn phi1(z: Complex64, tau: f64) -> Complex64 {
    let w = z * tau;
    if w.norm() < 1e-8 {
        return tau * (1.0 - 0.5 * w);
    }
    -cexpm1_neg(w) / z
}

/// `∫₀^τ φ₁(z, s) ds = (τ − φ₁(z, τ))/z`.
fn phi2(z: Complex64, tau: f64) -> Complex64 {
    let w = z * tau;
    if w.norm() < 1e-3 {
        // τ²(1/2 − w/6 + w²/24 − w³/120 + w⁴/720)
        let s = 0.5 - w / 6.0 + w * w / 24.0 - w * w * w / 120.0 + w * w * w * w / 720.0;
        return tau * tau * s;
    }
    (tau - phi1(z, tau)) / z
}

/// Exact exponential integrator per mode:
/// `û(t_{k+1}) = e^{−zh}û(t_k) + φ₁(z, h) f̂_k`, `z = λ + ψ(ξ)`.
pub fn spectral_resolvent(symbol: &Symbol, f: &PiecewiseField, lambda: f64) -> Result<ResolventSolution> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CoreError::InvalidInput(format!("lambda {lambda} must be finite and ≥ 0")));
    }
    let g = f.grid();
    let psi = symbol.on_grid(g)?;
    let rates: Vec<Complex64> = psi.iter().map(|p| lambda + p).collect();
    let mut u = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut fields = vec![GridField::constant(g.d, g.n, g.period, 0.0)?];
    for (k, fk) in f.fields.iter().enumerate() {
        let h = f.times[k + 1] - f.times[k];
        let fh = fk.spectrum();
        u.par_iter_mut().zip(&rates).zip(fh).for_each(|((uh, z), fv)| {
            *uh = (1.0 + cexpm1_neg(z * h)) * *uh + phi1(*z, h) * fv;
        });
        fields.push(GridField::from_spectrum(g.d, g.n, g.period, u.clone())?);
    }
    Ok(ResolventSolution {
        times: f.times.clone(),
        lambda,
        symbol: symbol.describe().to_string(),
        method: SolveMethod::Spectral,
        fields,
        probes: vec![],
        probe_values: vec![],
        probe_stderr: vec![],
        rates,
    })
}

fn require_spectral(sol: &ResolventSolution, f: &PiecewiseField) -> Result<()> {
    if sol.method != SolveMethod::Spectral || sol.rates.is_empty() {
        return Err(CoreError::InvalidInput("a spectral solution with mode rates is required".into()));
    }
    if sol.times != f.times || !sol.fields[0].same_grid(f.grid()) {
        return Err(CoreError::InvalidInput("solution and forcing use different grids".into()));
    }
    Ok(())
}

/// Spectrum of `u(t_k + τ)` for `τ ∈ [0, t_{k+1} − t_k]`.
fn spectrum_inside(sol: &ResolventSolution, f: &PiecewiseField, k: usize, tau: f64) -> Vec<Complex64> {
    let uk = sol.fields[k].spectrum();
    let fk = f.fields[k].spectrum();
    sol.rates
        .iter()
        .zip(uk)
        .zip(fk)
        .map(|((z, u), fv)| (1.0 + cexpm1_neg(z * tau)) * u + phi1(*z, tau) * fv)
        .collect()
}

/// `max_k ‖u(t_k) − ∫₀^{t_k}((𝓛 − λ)u + f) ds‖₂`, with the time integral
/// taken in closed form per mode from the interval formula.
pub fn weak_formulation_residual(sol: &ResolventSolution, f: &PiecewiseField) -> Result<Vec<f64>> {
    require_spectral(sol, f)?;
    let g = f.grid();
    let scale = g.cell_volume() / g.len() as f64;
    let mut acc = vec![Complex64::new(0.0, 0.0); g.len()];
    let mut out = vec![0.0];
    for k in 0..f.fields.len() {
        let h = f.times[k + 1] - f.times[k];
        let uk = sol.fields[k].spectrum();
        let fk = f.fields[k].spectrum();
        let un = sol.fields[k + 1].spectrum();
        let mut s = 0.0;
        for i in 0..g.len() {
            let z = sol.rates[i];
            // ∫₀ʰ û = φ₁(z,h)û_k + φ₂(z,h)f̂_k
            let int_u = phi1(z, h) * uk[i] + phi2(z, h) * fk[i];
            acc[i] += -z * int_u + h * fk[i];
            s += (un[i] - acc[i]).norm_sqr();
        }
        out.push((s * scale).sqrt());
    }
    Ok(out)
}

/// Gauss–Legendre nodes on every interval, refined where the fastest
/// active mode decays within an interval.
fn time_nodes(sol: &ResolventSolution, f: &PiecewiseField) -> Vec<(usize, f64, f64)> {
    let mut fmax: f64 = 0.0;
    for fk in &f.fields {
        fmax = fk.spectrum().iter().fold(fmax, |m, c| m.max(c.norm()));
    }
    let mut zmax: f64 = 0.0;
    for fk in &f.fields {
        for (c, z) in fk.spectrum().iter().zip(&sol.rates) {
            if c.norm() > 1e-13 * fmax {
                zmax = zmax.max(z.norm());
            }
        }
    }
    let (x, w) = gauss_legendre(8);
    let mut nodes = vec![];
    for k in 0..f.fields.len() {
        let h = f.times[k + 1] - f.times[k];
        let panels = ((zmax * h / 4.0).ceil() as usize).clamp(1, 64);
        let ph = h / panels as f64;
        for p in 0..panels {
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push((k, ph * (p as f64 + 0.5 * (xi + 1.0)), 0.5 * ph * wi));
            }
        }
    }
    nodes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpGrowthRow {
    pub t: f64,
    /// `‖u(t)‖_p^p`.
    pub lhs: f64,
    /// `((1 − e^{−λt})/λ)^{p−1} ∫₀ᵗ e^{−λ(t−s)}‖f(s)‖_p^p ds`.
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralL2Check {
    pub ratio_grid: f64,
    pub ratio_spectral: f64,
    /// `sup_ξ |ξ|^α / (λ + Re ψ(ξ))` over grid modes.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub p: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub lp_growth: Vec<LpGrowthRow>,
    pub lp_growth_max_ratio: f64,
    /// `‖Δ^{α/2}u‖_{L^p(T)} / ‖f‖_{L^p(T)}`.
    pub regularity_ratio: f64,
    pub l2: Option<SpectralL2Check>,
}

fn time_weight(lambda: f64, t: f64, a: f64, b: f64) -> f64 {
    // ∫_a^b e^{−λ(t−s)} ds
    if lambda == 0.0 {
        b - a
    } else {
        (-lambda * (t - b)).exp() * -(-lambda * (b - a)).exp_m1() / lambda
    }
}

pub fn estimate_checks(sol: &ResolventSolution, f: &PiecewiseField, p: f64, alpha: f64) -> Result<EstimateReport> {
    require_spectral(sol, f)?;
    if !(p >= 2.0 && p.is_finite()) {
        return Err(CoreError::InvalidInput(format!("p = {p} must be finite and ≥ 2")));
    }
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(CoreError::InvalidInput(format!("alpha = {alpha} must lie in (0, 2)")));
    }
    let lambda = sol.lambda;
    let fp: Vec<f64> = f.fields.iter().map(|fk| fk.lp_norm(p).powf(p)).collect();
    let mut lp_growth = vec![];
    for (j, t) in sol.times.iter().enumerate().skip(1) {
        let lhs = sol.fields[j].lp_norm(p).powf(p);
        let pre = if lambda == 0.0 { *t } else { -(-lambda * t).exp_m1() / lambda };
        let integral: f64 = (0..j)
            .map(|k| fp[k] * time_weight(lambda, *t, f.times[k], f.times[k + 1]))
            .sum();
        let rhs = pre.powf(p - 1.0) * integral;
        let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
        lp_growth.push(LpGrowthRow { t: *t, lhs, rhs, ratio });
    }
    let lp_growth_max_ratio = lp_growth.iter().fold(0.0, |m: f64, r| m.max(r.ratio));

    let g = f.grid();
    let wn = g.wavenumbers();
    let mult: Vec<f64> = wn
        .iter()
        .map(|xi| {
            let r = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r == 0.0 {
                0.0
            } else {
                -r.powf(alpha)
            }
        })
        .collect();
    let nodes = time_nodes(sol, f);
    let scale = g.cell_volume() / g.len() as f64;
    let mut num_grid = 0.0;
    let mut num_spec = 0.0;
    for (k, tau, w) in &nodes {
        let spec = spectrum_inside(sol, f, *k, *tau);
        if p == 2.0 {
            num_spec += w * scale * spec.iter().zip(&mult).map(|(c, m)| (c * m).norm_sqr()).sum::<f64>();
        }
        let du: Vec<Complex64> = spec.iter().zip(&mult).map(|(c, m)| c * m).collect();
        let field = GridField::from_spectrum(g.d, g.n, g.period, du)?;
        num_grid += w * field.lp_norm(p).powf(p);
    }
    let den = f.lp_time_norm(p);
    let regularity_ratio = if den == 0.0 { 0.0 } else { num_grid.powf(1.0 / p) / den };
    let l2 = if p == 2.0 {
        let den_spec: f64 = f
            .fields
            .iter()
            .zip(f.times.windows(2))
            .map(|(fk, w)| fk.spectral_l2_norm().powi(2) * (w[1] - w[0]))
            .sum::<f64>()
            .sqrt();
        let bound = mult
            .iter()
            .zip(&sol.rates)
            .filter(|(m, _)| **m != 0.0)
            .map(|(m, z)| m.abs() / z.re)
            .fold(0.0, f64::max);
        Some(SpectralL2Check {
            ratio_grid: regularity_ratio,
            ratio_spectral: if den_spec == 0.0 { 0.0 } else { num_spec.sqrt() / den_spec },
            bound,
        })
    } else {
        None
    };
    Ok(EstimateReport {
        p,
        alpha,
        lambda,
        lp_growth,
        lp_growth_max_ratio,
        regularity_ratio,
        l2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementLadder {
    pub resolutions: Vec<usize>,
    pub ratios: Vec<f64>,
    pub max_min_ratio: f64,
}

/// Maximal-regularity ratio of the same continuous forcing sampled at
/// several resolutions.
pub fn refinement_ladder(
    symbol: &Symbol,
    f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    times: &[f64],
    d: usize,
    period: f64,
    resolutions: &[usize],
    lambda: f64,
    p: f64,
    alpha: f64,
) -> Result<RefinementLadder> {
    let mut ratios = vec![];
    for n in resolutions {
        let pf = PiecewiseField::sample(f, times, d, *n, period)?;
        let sol = spectral_resolvent(symbol, &pf, lambda)?;
        ratios.push(estimate_checks(&sol, &pf, p, alpha)?.regularity_ratio);
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    Ok(RefinementLadder {
        resolutions: resolutions.to_vec(),
        max_min_ratio: if min > 0.0 { max / min } else { f64::INFINITY },
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaLadder {
    pub lambdas: Vec<f64>,
    /// `sup_t ‖u_λ(t)‖₂`.
    pub sup_norms: Vec<f64>,
    pub slope: f64,
    pub slope_stderr: f64,
}

pub fn lambda_ladder(symbol: &Symbol, f: &PiecewiseField, lambdas: &[f64]) -> Result<LambdaLadder> {
    if lambdas.len() < 2 || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(CoreError::InvalidInput("need at least two positive λ".into()));
    }
    let mut sup_norms = vec![];
    for l in lambdas {
        let sol = spectral_resolvent(symbol, f, *l)?;
        sup_norms.push(sol.fields.iter().map(|u| u.lp_norm(2.0)).fold(0.0, f64::max));
    }
    let fit = stats::loglog_fit(lambdas, &sup_norms);
    Ok(LambdaLadder {
        lambdas: lambdas.to_vec(),
        sup_norms,
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeynmanKacOpts {
    pub n_paths: usize,
    /// Trapezoid sub-steps per forcing interval.
    pub substeps: usize,
    pub seed: u64,
}

/// Monte Carlo `u(t, x) = E ∫₀ᵗ e^{−λ(t−s)} f(s, x + X_t − X_s) ds` with one
/// driver path reused for every `(t, x)`. The forcing is frozen at the left
/// end of each interval of `times`, matching [`PiecewiseField::sample`].
pub fn feynman_kac_resolvent(
    spec: &DriverSpec,
    f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    times: &[f64],
    probes: &[Vec<f64>],
    lambda: f64,
    opts: FeynmanKacOpts,
) -> Result<ResolventSolution> {
    check_grid(times)?;
    let d = spec.dim();
    if probes.iter().any(|x| x.len() != d) {
        return Err(CoreError::DimensionMismatch {
            expected: d,
            found: probes.iter().map(|x| x.len()).find(|l| *l != d).unwrap_or(d),
        });
    }
    if opts.n_paths < 2 || opts.substeps == 0 {
        return Err(CoreError::InvalidInput("need n_paths ≥ 2 and substeps ≥ 1".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(CoreError::InvalidInput(format!("lambda {lambda} must be finite and ≥ 0")));
    }
    let m = opts.substeps;
    let mut fine = vec![0.0];
    for w in times.windows(2) {
        for s in 1..=m {
            fine.push(if s == m { w[1] } else { w[0] + (w[1] - w[0]) * s as f64 / m as f64 });
        }
    }
    let ens = sample_driver(spec, &fine, opts.n_paths, opts.seed)?;
    let nt = times.len();
    let np = probes.len();
    let per_path: Vec<Vec<f64>> = (0..opts.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut out = vec![0.0; nt * np];
            let mut y = vec![0.0; d];
            for (j, t) in times.iter().enumerate().skip(1) {
                let xt = ens.state(path, j * m);
                for (q, x0) in probes.iter().enumerate() {
                    let mut total = 0.0;
                    for k in 0..j {
                        let tk = times[k];
                        let mut prev: Option<f64> = None;
                        for i in k * m..=(k + 1) * m {
                            let s = fine[i];
                            let xs = ens.state(path, i);
                            for c in 0..d {
                                y[c] = x0[c] + xt[c] - xs[c];
                            }
                            let v = (-lambda * (t - s)).exp() * f(tk, &y);
                            if let Some(pv) = prev {
                                total += 0.5 * (fine[i] - fine[i - 1]) * (pv + v);
                            }
                            prev = Some(v);
                        }
                    }
                    out[j * np + q] = total;
                }
            }
            out
        })
        .collect();
    let mut probe_values = vec![vec![0.0; np]; nt];
    let mut probe_stderr = vec![vec![0.0; np]; nt];
    let mut col = vec![0.0; opts.n_paths];
    for j in 0..nt {
        for q in 0..np {
            for (c, row) in col.iter_mut().zip(&per_path) {
                *c = row[j * np + q];
            }
            probe_values[j][q] = stats::mean(&col);
            probe_stderr[j][q] = stats::stderr(&col);
        }
    }
    Ok(ResolventSolution {
        times: times.to_vec(),
        lambda,
        symbol: format!("driver {}", ens.meta.driver),
        method: SolveMethod::FeynmanKac,
        fields: vec![],
        probes: probes.to_vec(),
        probe_values,
        probe_stderr,
        rates: vec![],
    })
}

/// Trigonometric interpolation of a spectral solution at an off-grid point.
pub fn evaluate_at(field: &GridField, x: &[f64]) -> Result<f64> {
    if x.len() != field.d {
        return Err(CoreError::DimensionMismatch {
            expected: field.d,
            found: x.len(),
        });
    }
    let spec = field.spectrum();
    let mut s = 0.0;
    for (i, c) in spec.iter().enumerate() {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let xi = field.wavenumber(i);
        let ph: f64 = xi.iter().zip(x).map(|(a, b)| a * b).sum();
        s += (c * Complex64::from_polar(1.0, ph)).re;
    }
    Ok(s / field.len() as f64)
}
