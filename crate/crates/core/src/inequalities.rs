//! Brute-force checks of a few elementary inequalities behind the symbol and
//! coupling estimates, with quadrature oracles and constant searches.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{CoreError, Result};
use crate::linalg;
use crate::quad::{integrate, integrate_breaks, osc_power_tail, QuadOpts};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityCase {
    pub check: String,
    pub inputs: Vec<f64>,
    pub lhs: f64,
    /// Right side without its constant.
    pub shape: f64,
    pub constant: Option<f64>,
    pub rhs: Option<f64>,
    /// `rhs − lhs`; negative values are kept.
    pub margin: Option<f64>,
    pub oracle_error: f64,
}

impl InequalityCase {
    fn new(check: &str, inputs: Vec<f64>, lhs: f64, shape: f64, oracle_error: f64) -> Self {
        InequalityCase {
            check: check.to_string(),
            inputs,
            lhs,
            shape,
            constant: None,
            rhs: None,
            margin: None,
            oracle_error,
        }
    }

    /// `lhs / shape`, with `0/0 = 0`.
    pub fn ratio(&self) -> f64 {
        if self.lhs == 0.0 {
            0.0
        } else {
            self.lhs / self.shape
        }
    }

    pub fn with_constant(mut self, c: f64) -> Self {
        let rhs = c * self.shape;
        self.constant = Some(c);
        self.rhs = Some(rhs);
        self.margin = Some(rhs - self.lhs);
        self
    }
}

/// The two integrals of the elementary cosine/sine inequality, with their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CosSinParts {
    pub cos_part: f64,
    pub sin_part: f64,
    pub error: f64,
    /// Envelope bound on everything beyond the tail radius.
    pub tail_bound: f64,
    pub tail_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regime {
    Below,
    One,
    Above,
}

fn regime(alpha: f64) -> Result<Regime> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(CoreError::InvalidInput(format!("alpha = {alpha} must lie in (0, 2)")));
    }
    Ok(if alpha < 1.0 {
        Regime::Below
    } else if alpha == 1.0 {
        Regime::One
    } else {
        Regime::Above
    })
}

/// Fourier cosine coefficients of `|sin x|` (even = false) or `|cos x|`
/// (even = true) in `cos(2kx)`.
fn abs_trig_coeffs(cosine: bool, k_max: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| {
            if k == 0 {
                2.0 / PI
            } else {
                let c = -4.0 / (PI * (4.0 * (k * k) as f64 - 1.0));
                if cosine && k % 2 == 1 {
                    -c
                } else {
                    c
                }
            }
        })
        .collect()
}

/// `∫_R^∞ 2|f(u)||sin v| r^{−s} dr` with `2u = p r`, `2v = m r`, where `f` is
/// sin or cos, through the product of the two Fourier series.
///
/// The series is cut at `k_max` and at `k_max/2`; the resonant remainder
/// decays like `k⁻³`, which gives a Richardson step and an error estimate.
fn abs_product_tail(cosine: bool, p: f64, m: f64, r0: f64, s: f64, k_max: usize) -> Result<(f64, f64)> {
    if p == 0.0 {
        // u ≡ 0: |sin u| = 0 and |cos u| = 1
        if !cosine {
            return Ok((0.0, 0.0));
        }
        let b = abs_trig_coeffs(false, k_max);
        let mut total = 0.0;
        let mut err = 0.0;
        for (j, bj) in b.iter().enumerate() {
            let (v, e) = osc_power_tail(j as f64 * m, r0, s)?;
            total += 2.0 * bj * v.re;
            err += (2.0 * bj).abs() * e;
        }
        // non-resonant remainder: |b_j| ≤ 1/j², tails ≤ 2r0^{−s}/(j|m|)
        err += 2.0 * r0.powf(-s) / (m.abs() * (k_max * k_max) as f64);
        return Ok((total, err));
    }
    let a = abs_trig_coeffs(cosine, k_max);
    let b = abs_trig_coeffs(false, k_max);
    let half = k_max / 2;
    let mut total = 0.0;
    let mut coarse = 0.0;
    let mut err = 0.0;
    for (k, ak) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            for sign in [1.0, -1.0] {
                if j == 0 && sign < 0.0 {
                    continue;
                }
                let w = if j == 0 { 2.0 } else { 1.0 };
                let omega = k as f64 * p + sign * j as f64 * m;
                let (v, e) = if omega.abs() < 1e-14 * (p.abs() + m.abs()) {
                    osc_power_tail(0.0, r0, s)?
                } else {
                    osc_power_tail(omega, r0, s)?
                };
                let term = w * ak * bj * v.re;
                total += term;
                if k <= half && j <= half {
                    coarse += term;
                }
                err += (w * ak * bj).abs() * e;
            }
        }
    }
    let step = (total - coarse) / 7.0;
    Ok((total + step, err + 2.0 * step.abs()))
}

/// `∫_R^∞ (sin ar − sin br) r^{−s} dr`.
fn sin_diff_tail(a: f64, b: f64, r0: f64, s: f64) -> Result<(f64, f64)> {
    let (ta, ea) = osc_power_tail(a, r0, s)?;
    let (tb, eb) = osc_power_tail(b, r0, s)?;
    Ok((ta.im - tb.im, ea + eb))
}

fn push_grid(breaks: &mut Vec<f64>, step: f64, r_max: f64, limit: usize) -> Result<()> {
    if step <= 0.0 || !step.is_finite() {
        return Ok(());
    }
    let n = (r_max / step).floor() as usize;
    if n > limit {
        return Err(CoreError::Accuracy {
            context: "cos_sin breakpoints".into(),
            partial: f64::NAN,
            error: f64::INFINITY,
        });
    }
    breaks.extend((1..=n).map(|k| k as f64 * step));
    Ok(())
}

/// Sign changes of `g` on `[lo, hi]` located by a scan and bisection.
fn roots(g: &dyn Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let h = (hi - lo) / n as f64;
    let mut x0 = lo + 1e-3 * h;
    let mut g0 = g(x0);
    for i in 1..=n {
        let x1 = lo + i as f64 * h;
        let g1 = g(x1);
        if g0 * g1 < 0.0 {
            let (mut a, mut b, mut ga) = (x0, x1, g0);
            for _ in 0..80 {
                let c = 0.5 * (a + b);
                let gc = g(c);
                if gc * ga <= 0.0 {
                    b = c;
                } else {
                    a = c;
                    ga = gc;
                }
            }
            out.push(0.5 * (a + b));
        }
        x0 = x1;
        g0 = g1;
    }
    out
}

/// `cos ar − cos br` without cancellation.
fn cos_diff(a: f64, b: f64, r: f64) -> f64 {
    -2.0 * (0.5 * (a + b) * r).sin() * (0.5 * (a - b) * r).sin()
}

/// `sin ar − sin br` without cancellation.
fn sin_diff(a: f64, b: f64, r: f64) -> f64 {
    2.0 * (0.5 * (a + b) * r).cos() * (0.5 * (a - b) * r).sin()
}

/// `(a − b) r − (sin ar − sin br)`, by its Taylor series for small `r`.
fn linear_minus_sin_diff(a: f64, b: f64, r: f64) -> f64 {
    let x = a.abs().max(b.abs()) * r;
    if x > 0.1 {
        return (a - b) * r - sin_diff(a, b, r);
    }
    // Σ_{n≥1} (−1)^{n+1} (a^{2n+1} − b^{2n+1}) r^{2n+1} / (2n+1)!
    let (mut pa, mut pb) = (a * r, b * r);
    let (a2, b2) = ((a * r).powi(2), (b * r).powi(2));
    let mut fact = 1.0;
    let mut sum = 0.0;
    for n in 1..10 {
        pa *= a2;
        pb *= b2;
        fact *= (2 * n) as f64 * (2 * n + 1) as f64;
        let term = (pa - pb) / fact;
        sum += if n % 2 == 1 { term } else { -term };
    }
    sum
}

/// Both integrals of the cosine/sine inequality on `[0, ∞)`.
///
/// The head `[0, R]` uses adaptive quadrature between the kinks of the
/// absolute values; the tail beyond `R` is exact through Fourier series of
/// `|sin|`, `|cos|` and oscillatory power tails.
pub fn cos_sin_parts(a: f64, b: f64, alpha: f64) -> Result<CosSinParts> {
    cos_sin_parts_at(a, b, alpha, 20.0)
}

/// [`cos_sin_parts`] with the tail radius at `periods` periods of `r ↦ (a−b)r`.
pub fn cos_sin_parts_at(a: f64, b: f64, alpha: f64, periods: f64) -> Result<CosSinParts> {
    let reg = regime(alpha)?;
    let d = (a - b).abs();
    if d == 0.0 {
        return Ok(CosSinParts {
            cos_part: 0.0,
            sin_part: 0.0,
            error: 0.0,
            tail_bound: 0.0,
            tail_radius: 0.0,
        });
    }
    let s = 1.0 + alpha;
    let p = a + b;
    let m = a - b;
    let r_tail = 2.0 * PI * periods / d;
    let cutoff = 1.0 / d;
    // compensated sine term
    let comp = move |r: f64| -> f64 {
        match reg {
            Regime::Below => sin_diff(a, b, r).abs(),
            Regime::One if r > cutoff => sin_diff(a, b, r).abs(),
            _ => linear_minus_sin_diff(a, b, r).abs(),
        }
    };
    let cosf = move |r: f64| cos_diff(a, b, r).abs();

    let mut breaks = vec![0.0, r_tail];
    push_grid(&mut breaks, 2.0 * PI / d, r_tail, 1_000_000)?;
    if p != 0.0 {
        push_grid(&mut breaks, PI / p.abs(), r_tail, 1_000_000)?;
    }
    if reg != Regime::Below {
        let lim = if reg == Regime::One { cutoff } else { 2.0 * cutoff };
        let g = move |r: f64| linear_minus_sin_diff(a, b, r);
        let n = (lim * (a.abs() + b.abs() + d) * 20.0).ceil().max(200.0) as usize;
        breaks.extend(roots(&g, 0.0, lim, n));
        if reg == Regime::One {
            breaks.push(cutoff);
        }
    }
    breaks.retain(|r| *r <= r_tail);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * y.abs().max(1e-300));

    // cancellation in |cos ar − cos br| limits the attainable absolute accuracy
    let abs_floor = 1e-12 * (a.abs() + b.abs()).powf(alpha);
    let opts = QuadOpts {
        abs_tol: abs_floor,
        rel_tol: 1e-12,
        max_intervals: 50 * breaks.len() + 2000,
    };
    // integrand ~ r^c at 0; the first panel uses r = r1 t^k with k = 1/(1 + c)
    let head = |g: &dyn Fn(f64) -> f64, c: f64| -> Result<(f64, f64)> {
        let r1 = breaks[1];
        let k = 1.0 / (1.0 + c);
        let first = integrate(
            |t| {
                if t <= 0.0 {
                    return 0.0;
                }
                let r = r1 * t.powf(k);
                g(r) * r.powf(-s) * r1 * k * t.powf(k - 1.0)
            },
            0.0,
            1.0,
            QuadOpts::tol(abs_floor, 1e-11),
        )
        .require("cos_sin head")?;
        let rest = integrate_breaks(|r| g(r) * r.powf(-s), &breaks[1..], opts).require("cos_sin head")?;
        Ok((first.value + rest.value, first.error + rest.error))
    };
    let (c_head, c_err) = head(&cosf, 1.0 - alpha)?;
    let (s_head, s_err) = head(&comp, if reg == Regime::Below { -alpha } else { 2.0 - alpha })?;
    let k_max = 128;
    let (c_tail, ct_err) = abs_product_tail(false, p, m, r_tail, s, k_max)?;
    let (s_tail, st_err) = match reg {
        Regime::Above => {
            // beyond 2/|a−b| the linear term dominates, so the sign is fixed
            let (t, e) = sin_diff_tail(a, b, r_tail, s)?;
            (m.abs() * r_tail.powf(1.0 - alpha) / (alpha - 1.0) - m.signum() * t, e)
        }
        _ => abs_product_tail(true, p, m, r_tail, s, k_max)?,
    };
    let tail_bound = match reg {
        Regime::Above => 4.0 * r_tail.powf(-alpha) / alpha + d * r_tail.powf(1.0 - alpha) / (alpha - 1.0),
        _ => 4.0 * r_tail.powf(-alpha) / alpha,
    };
    Ok(CosSinParts {
        cos_part: c_head + c_tail,
        sin_part: s_head + s_tail,
        error: c_err + s_err + ct_err + st_err,
        tail_bound,
        tail_radius: r_tail,
    })
}

/// The same head as [`cos_sin_parts`] but the tail replaced by plain quadrature
/// over `[R, 10R]`; used to check the tail against its declared bound.
pub fn cos_sin_truncated(a: f64, b: f64, alpha: f64) -> Result<f64> {
    let parts = cos_sin_parts(a, b, alpha)?;
    if parts.tail_radius == 0.0 {
        return Ok(0.0);
    }
    let reg = regime(alpha)?;
    let r0 = parts.tail_radius;
    let d = (a - b).abs();
    let s = 1.0 + alpha;
    let p = a + b;
    let g = |r: f64| {
        let c = ((a * r).cos() - (b * r).cos()).abs();
        let ds = (a * r).sin() - (b * r).sin();
        let sn = match reg {
            Regime::Above => ((a - b) * r - ds).abs(),
            _ => ds.abs(),
        };
        (c + sn) * r.powf(-s)
    };
    let mut breaks = vec![r0, 10.0 * r0];
    push_grid(&mut breaks, 2.0 * PI / d, 10.0 * r0, 10_000_000)?;
    if p != 0.0 {
        push_grid(&mut breaks, PI / p.abs(), 10.0 * r0, 10_000_000)?;
    }
    breaks.retain(|r| *r >= r0 && *r <= 10.0 * r0);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let mid = integrate_breaks(g, &breaks, QuadOpts::tol(0.0, 1e-12)).value;
    // head = full value minus the exact tail
    let full = parts.cos_part + parts.sin_part;
    let (ct, _) = abs_product_tail(false, p, a - b, r0, s, 128)?;
    let st = match reg {
        Regime::Above => {
            let (t, _) = sin_diff_tail(a, b, r0, s)?;
            d * r0.powf(1.0 - alpha) / (alpha - 1.0) - (a - b).signum() * t
        }
        _ => abs_product_tail(true, p, a - b, r0, s, 128)?.0,
    };
    Ok(full - ct - st + mid)
}

/// Right-side shape of the cosine/sine inequality in each regime.
pub fn cos_sin_shape(a: f64, b: f64, alpha: f64, beta: f64) -> Result<f64> {
    let d = (a - b).abs();
    let sum = a.abs() + b.abs();
    Ok(match regime(alpha)? {
        Regime::Below => d.powf(alpha),
        Regime::One => {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(CoreError::InvalidInput(format!("beta = {beta} must lie in (0, 1)")));
            }
            sum.powf(1.0 - beta) * d.powf(beta)
        }
        Regime::Above => sum.powf(alpha - 1.0) * d,
    })
}

/// Left side and right-side shape of the cosine/sine inequality for scalars `a, b`. `beta`
/// is used only when α = 1.
pub fn le5_check(a: f64, b: f64, alpha: f64, beta: f64) -> Result<InequalityCase> {
    let parts = cos_sin_parts(a, b, alpha)?;
    let shape = cos_sin_shape(a, b, alpha, beta)?;
    let lhs = parts.cos_part + parts.sin_part;
    let rel = parts.error / lhs.abs().max(1e-300);
    if rel > 1e-6 {
        return Err(CoreError::Accuracy {
            context: "cos_sin integrals".into(),
            partial: lhs,
            error: parts.error,
        });
    }
    let mut inputs = vec![a, b, alpha];
    if alpha == 1.0 {
        inputs.push(beta);
    }
    Ok(InequalityCase::new("cos_sin", inputs, lhs, shape, parts.error))
}

fn signed_power(x: &[f64], q: f64) -> Vec<f64> {
    let n = linalg::norm(x);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    let s = n.powf(q - 1.0);
    x.iter().map(|v| v * s).collect()
}

fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// `|x|x|^{q−1} − y|y|^{q−1}|` against `|x − y|^q`.
pub fn le52_check(x: &[f64], y: &[f64], q: f64) -> Result<InequalityCase> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CoreError::InvalidInput(format!("q = {q} must lie in (0, 1)")));
    }
    if x.len() != y.len() {
        return Err(CoreError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let lhs = dist(&signed_power(x, q), &signed_power(y, q));
    let shape = dist(x, y).powf(q);
    let mut inputs = x.to_vec();
    inputs.extend_from_slice(y);
    inputs.push(q);
    Ok(InequalityCase::new("signed_power", inputs, lhs, shape, 0.0))
}

/// `||x|^q − |y|^q| ≤ |x − y|^q`, declared with constant 1.
pub fn abs_power_check(x: &[f64], y: &[f64], q: f64) -> Result<InequalityCase> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(CoreError::InvalidInput(format!("q = {q} must lie in (0, 1]")));
    }
    let lhs = (linalg::norm(x).powf(q) - linalg::norm(y).powf(q)).abs();
    let shape = dist(x, y).powf(q);
    let mut inputs = x.to_vec();
    inputs.extend_from_slice(y);
    inputs.push(q);
    // rounding allowance of a few ulps on the right side
    let err = 8.0 * f64::EPSILON * (linalg::norm(x).powf(q) + linalg::norm(y).powf(q));
    Ok(InequalityCase::new("abs_power", inputs, lhs, shape, err).with_constant(1.0))
}

/// Whether a case violates its declared constant beyond the oracle error.
pub fn is_violation(case: &InequalityCase) -> bool {
    matches!(case.margin, Some(m) if m < -case.oracle_error)
}

/// Pair of points drawn from one of the geometries the estimates care
/// about: generic, near-equal, near-collinear, antipodal, and the two sides
/// of `|x − y| = |x|/2`.
pub fn stratified_pair<R: Rng + ?Sized>(d: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let gauss = |r: &mut R| -> Vec<f64> {
        (0..d)
            .map(|_| {
                let u: f64 = r.random::<f64>().max(1e-300);
                let v: f64 = r.random();
                (-2.0 * u.ln()).sqrt() * (2.0 * PI * v).cos()
            })
            .collect()
    };
    let scale = 10f64.powf(rng.random_range(-3.0..3.0));
    let x: Vec<f64> = gauss(rng).iter().map(|v| v * scale).collect();
    let nx = linalg::norm(&x);
    let kind = rng.random_range(0..6);
    let y: Vec<f64> = match kind {
        0 => gauss(rng).iter().map(|v| v * scale).collect(),
        1 => {
            let eps = 10f64.powf(rng.random_range(-8.0..0.0)) * nx;
            x.iter().zip(gauss(rng)).map(|(a, g)| a + eps * g / (d as f64).sqrt()).collect()
        }
        2 => {
            let t = rng.random_range(-2.0..3.0);
            let eps = 10f64.powf(rng.random_range(-8.0..-1.0)) * nx;
            x.iter().zip(gauss(rng)).map(|(a, g)| t * a + eps * g).collect()
        }
        3 => {
            let t = 10f64.powf(rng.random_range(-3.0..1.0));
            let eps = 10f64.powf(rng.random_range(-8.0..-2.0)) * nx;
            x.iter().zip(gauss(rng)).map(|(a, g)| -t * a + eps * g).collect()
        }
        4 => {
            // |x − y| ≤ |x|/2
            let g = gauss(rng);
            let ng = linalg::norm(&g).max(1e-300);
            let rad = rng.random_range(0.0..0.5) * nx;
            x.iter().zip(&g).map(|(a, b)| a + rad * b / ng).collect()
        }
        _ => {
            // |x − y| > |x|/2
            let g = gauss(rng);
            let ng = linalg::norm(&g).max(1e-300);
            let rad = (0.5 + 10f64.powf(rng.random_range(-3.0..2.0))) * nx;
            x.iter().zip(&g).map(|(a, b)| a + rad * b / ng).collect()
        }
    };
    (x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupRatio {
    pub constant: f64,
    pub argmax: Vec<f64>,
    /// Running maximum after each doubling of the sample.
    pub history: Vec<(usize, f64)>,
    /// Maximum changed by less than 1% over the last doubling.
    pub stable: bool,
    pub evaluations: usize,
}

/// Maximum of `ratio(input)` over samples `sampler(i)`, drawn in doubling
/// rounds until `budget` evaluations are spent. Sample `i` must depend only
/// on `i` so that the search is reproducible.
pub fn sup_ratio_search<I, S, F>(sampler: S, ratio: F, initial: usize, budget: usize) -> Result<SupRatio>
where
    I: Send,
    S: Fn(usize) -> I + Sync,
    F: Fn(&I) -> Result<(f64, Vec<f64>)> + Sync,
{
    let mut best = (0.0f64, Vec::new());
    let mut history = Vec::new();
    let mut done = 0usize;
    let mut round = initial.max(1);
    while done < budget {
        let n = round.min(budget - done);
        let found = (done..done + n)
            .into_par_iter()
            .map(|i| ratio(&sampler(i)))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold((0.0f64, Vec::new()), |acc, v| if v.0 > acc.0 { v } else { acc });
        if found.0 > best.0 {
            best = found;
        }
        done += n;
        history.push((done, best.0));
        round = done;
    }
    let stable = match history.len() {
        0 | 1 => false,
        k => {
            let prev = history[k - 2].1;
            let last = history[k - 1].1;
            last == 0.0 || (last - prev).abs() < 0.01 * last
        }
    };
    Ok(SupRatio {
        constant: best.0,
        argmax: best.1,
        history,
        stable,
        evaluations: done,
    })
}

/// Seeded stratified pair for sample index `i`.
pub fn pair_sample(seed: u64, d: usize, i: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng::stream(seed, rng::channel::SEARCH, i as u64);
    stratified_pair(d, &mut r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsPowerSweep {
    pub q: f64,
    pub pairs: usize,
    pub violations: usize,
    pub worst_ratio: f64,
    pub worst_input: Vec<f64>,
}

/// Pointwise check of `||x|^q − |y|^q| ≤ |x − y|^q` on stratified pairs.
pub fn abs_power_sweep(q: f64, d: usize, pairs: usize, seed: u64) -> Result<AbsPowerSweep> {
    abs_power_check(&[0.0], &[0.0], q)?;
    let (violations, worst) = (0..pairs)
        .into_par_iter()
        .map(|i| {
            let (x, y) = pair_sample(seed, d, i);
            let c = abs_power_check(&x, &y, q).expect("q validated above");
            (is_violation(&c) as usize, (c.ratio(), i, c.inputs))
        })
        .reduce(
            || (0, (0.0, usize::MAX, Vec::new())),
            // ties go to the lowest index so the result ignores the thread count
            |a, b| {
                let keep_b = b.1 .0 > a.1 .0 || (b.1 .0 == a.1 .0 && b.1 .1 < a.1 .1);
                (a.0 + b.0, if keep_b { b.1 } else { a.1 })
            },
        );
    Ok(AbsPowerSweep {
        q,
        pairs,
        violations,
        worst_ratio: worst.0,
        worst_input: worst.2,
    })
}

/// Sample `i` of scalar pairs `(1, b)` with `b ∈ [−1, 1)` concentrated near 1;
/// by homogeneity and the symmetries `(a, b) → (b, a)`, `(−a, −b)` these cover
/// every pair up to scaling.
pub fn cos_sin_pair_sample(seed: u64, i: usize) -> (f64, f64) {
    let mut r = rng::stream(seed, rng::channel::SEARCH, i as u64);
    let u: f64 = r.random();
    let near: bool = r.random();
    let b = if near { 1.0 - 2.0 * u.powi(4).max(1e-4) } else { 1.0 - 2.0 * u };
    (1.0, b.clamp(-1.0, 1.0 - 1e-4))
}
