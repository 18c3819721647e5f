//! The nonlocal operators `A` and `B` on smooth test functions.
//!
//! Each Lévy measure is reduced to rays `r ↦ x + r v` with radial density
//! `w r^{−1−α}`. On `[0, δ]` the Taylor remainder is written as an integral
//! of the Hessian (or gradient), which removes the singularity after the
//! substitution `r = δ t^{1/(2−α)}`. Beyond δ the value part is integrated
//! numerically up to the point where an analytic tail takes over, and the
//! `f(x)` and compensator parts are integrated in closed form.

use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CoreError, Result};
use crate::linalg::{self, Mat};
use crate::measures::{LevyModel, SphericalMeasure, StableMeasure};
use crate::quad::{gauss_legendre, integrate_breaks, osc_power_tail, QuadOpts};
use crate::symbol::Compensation;

pub type FnX = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type GradX = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// Row-major d×d Hessian.
pub type HessX = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// `amp · cos(ξ·x + phase)`
#[derive(Debug, Clone, PartialEq)]
pub struct Wave {
    pub amp: f64,
    pub xi: Vec<f64>,
    pub phase: f64,
}

/// What is known about `f` far from a point, used for the radial tails.
#[derive(Debug, Clone, PartialEq)]
pub enum Tail {
    /// `f = 0` outside the ball.
    Compact { center: Vec<f64>, radius: f64 },
    /// Finite sum of cosine waves.
    Waves(Vec<Wave>),
    Constant(f64),
    /// Only a sup bound; tails are dropped and counted as error.
    Bounded { sup: f64 },
    Sum(Vec<(f64, Tail)>),
}

impl Tail {
    fn translate(&self, h: &[f64]) -> Tail {
        match self {
            Tail::Compact { center, radius } => Tail::Compact {
                center: center.iter().zip(h).map(|(c, s)| c + s).collect(),
                radius: *radius,
            },
            Tail::Waves(ws) => Tail::Waves(
                ws.iter()
                    .map(|w| Wave {
                        amp: w.amp,
                        xi: w.xi.clone(),
                        phase: w.phase - linalg::dot(&w.xi, h),
                    })
                    .collect(),
            ),
            Tail::Sum(v) => Tail::Sum(v.iter().map(|(c, t)| (*c, t.translate(h))).collect()),
            other => other.clone(),
        }
    }

    fn product(a: &Tail, b: &Tail, sup_a: f64, sup_b: f64) -> Tail {
        match (a, b) {
            (Tail::Compact { .. }, _) => a.clone(),
            (_, Tail::Compact { .. }) => b.clone(),
            (Tail::Constant(c), t) | (t, Tail::Constant(c)) => Tail::Sum(vec![(*c, t.clone())]),
            (Tail::Waves(wa), Tail::Waves(wb)) => {
                let mut out = Vec::new();
                for p in wa {
                    for q in wb {
                        let amp = 0.5 * p.amp * q.amp;
                        out.push(Wave {
                            amp,
                            xi: p.xi.iter().zip(&q.xi).map(|(x, y)| x + y).collect(),
                            phase: p.phase + q.phase,
                        });
                        out.push(Wave {
                            amp,
                            xi: p.xi.iter().zip(&q.xi).map(|(x, y)| x - y).collect(),
                            phase: p.phase - q.phase,
                        });
                    }
                }
                Tail::Waves(out)
            }
            _ => Tail::Bounded { sup: sup_a * sup_b },
        }
    }

    /// Radius along the ray after which the analytic tail applies, if the
    /// value part vanishes beyond it (`Some`) or the tail is available from
    /// any radius (`None`).
    fn ray_extent(&self, x: &[f64], v: &[f64]) -> Option<f64> {
        let vn = linalg::norm(v);
        match self {
            Tail::Compact { center, radius } => {
                let dx: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                Some((linalg::norm(&dx) + radius) / vn)
            }
            Tail::Sum(v2) => v2
                .iter()
                .filter_map(|(_, t)| t.ray_extent(x, v))
                .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r)))),
            _ => None,
        }
    }

    /// First radius at which the ray can meet the support (0 if unknown).
    fn ray_entry(&self, x: &[f64], v: &[f64]) -> f64 {
        match self {
            Tail::Compact { center, radius } => {
                let vn = linalg::norm(v);
                let dx: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
                ((linalg::norm(&dx) - radius) / vn).max(0.0)
            }
            _ => 0.0,
        }
    }

    /// `∫_{r0}^∞ f(x + r v) r^{−s} dr` and an error bound.
    fn ray_tail(&self, x: &[f64], v: &[f64], r0: f64, s: f64) -> Result<(f64, f64)> {
        match self {
            Tail::Compact { .. } => {
                let ext = self.ray_extent(x, v).unwrap_or(0.0);
                if r0 >= ext {
                    Ok((0.0, 0.0))
                } else {
                    Err(CoreError::InvalidInput("compact tail requested inside the support".into()))
                }
            }
            Tail::Waves(ws) => {
                let mut val = 0.0;
                let mut err = 0.0;
                for w in ws {
                    let a = linalg::dot(&w.xi, x) + w.phase;
                    let omega = linalg::dot(&w.xi, v);
                    let (c, e) = osc_power_tail(omega, r0, s)?;
                    let rot = num_complex::Complex64::from_polar(1.0, a);
                    val += w.amp * (rot * c).re;
                    err += w.amp.abs() * e;
                }
                Ok((val, err))
            }
            Tail::Constant(c) => Ok((c * r0.powf(1.0 - s) / (s - 1.0), 0.0)),
            Tail::Bounded { sup } => Ok((0.0, sup * r0.powf(1.0 - s) / (s - 1.0))),
            Tail::Sum(v2) => {
                let mut val = 0.0;
                let mut err = 0.0;
                for (c, t) in v2 {
                    let (a, e) = t.ray_tail(x, v, r0, s)?;
                    val += c * a;
                    err += c.abs() * e;
                }
                Ok((val, err))
            }
        }
    }

    /// Whether every component has an analytic tail from any radius
    /// beyond its extent.
    fn is_exact(&self) -> bool {
        match self {
            Tail::Bounded { .. } => false,
            Tail::Sum(v) => v.iter().all(|(_, t)| t.is_exact()),
            _ => true,
        }
    }
}

/// Smooth test function with derivatives and tail information.
#[derive(Clone)]
pub struct TestFunction {
    pub name: String,
    pub dim: usize,
    pub f: FnX,
    pub grad: GradX,
    pub hess: HessX,
    /// Scale over which f changes appreciably.
    pub length_scale: f64,
    pub support: Option<(Vec<f64>, f64)>,
    pub sup_norm: f64,
    pub smoothness: &'static str,
    pub tail: Tail,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TestFunction({}, d={})", self.name, self.dim)
    }
}

impl TestFunction {
    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        (self.hess)(x)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        TestFunction {
            name: format!("constant({c})"),
            dim,
            f: Arc::new(move |_| c),
            grad: Arc::new(move |_| vec![0.0; dim]),
            hess: Arc::new(move |_| vec![0.0; dim * dim]),
            length_scale: 1.0,
            support: None,
            sup_norm: c.abs(),
            smoothness: "analytic",
            tail: Tail::Constant(c),
        }
    }

    /// `amp · exp(−|x − c|² / (2w²))`; treated as supported in the ball of
    /// radius 9w, where it is below `3e−18·amp`.
    pub fn gaussian(center: Vec<f64>, width: f64, amp: f64) -> Self {
        let dim = center.len();
        let (c1, c2, c3) = (center.clone(), center.clone(), center.clone());
        let w2 = width * width;
        let f = Arc::new(move |x: &[f64]| {
            let r2: f64 = x.iter().zip(&c1).map(|(a, b)| (a - b) * (a - b)).sum();
            amp * (-0.5 * r2 / w2).exp()
        });
        let grad = Arc::new(move |x: &[f64]| {
            let r2: f64 = x.iter().zip(&c2).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = amp * (-0.5 * r2 / w2).exp();
            x.iter().zip(&c2).map(|(a, b)| -v * (a - b) / w2).collect()
        });
        let hess = Arc::new(move |x: &[f64]| {
            let d = x.len();
            let r2: f64 = x.iter().zip(&c3).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = amp * (-0.5 * r2 / w2).exp();
            let mut h = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    let di = x[i] - c3[i];
                    let dj = x[j] - c3[j];
                    h[i * d + j] = v * (di * dj / (w2 * w2) - if i == j { 1.0 / w2 } else { 0.0 });
                }
            }
            h
        });
        TestFunction {
            name: format!("gaussian(w={width})"),
            dim,
            f,
            grad,
            hess,
            length_scale: width,
            support: Some((center.clone(), 9.0 * width)),
            sup_norm: amp.abs(),
            smoothness: "analytic",
            tail: Tail::Compact {
                center,
                radius: 9.0 * width,
            },
        }
    }

    /// Compactly supported `amp · exp(1 − 1/(1 − |x−c|²/ρ²))`.
    pub fn bump(center: Vec<f64>, radius: f64, amp: f64) -> Self {
        let dim = center.len();
        let rho2 = radius * radius;
        let (c1, c2, c3) = (center.clone(), center.clone(), center.clone());
        let q_of = move |x: &[f64], c: &[f64]| -> f64 {
            x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / rho2
        };
        let f = Arc::new(move |x: &[f64]| {
            let q = q_of(x, &c1);
            if q >= 1.0 {
                0.0
            } else {
                amp * (1.0 - 1.0 / (1.0 - q)).exp()
            }
        });
        let grad = Arc::new(move |x: &[f64]| {
            let q = q_of(x, &c2);
            if q >= 1.0 {
                return vec![0.0; x.len()];
            }
            let g = amp * (1.0 - 1.0 / (1.0 - q)).exp();
            let g1 = -g / ((1.0 - q) * (1.0 - q));
            x.iter().zip(&c2).map(|(a, b)| g1 * 2.0 * (a - b) / rho2).collect()
        });
        let hess = Arc::new(move |x: &[f64]| {
            let d = x.len();
            let q = q_of(x, &c3);
            let mut h = vec![0.0; d * d];
            if q >= 1.0 {
                return h;
            }
            let u = 1.0 - q;
            let g = amp * (1.0 - 1.0 / u).exp();
            let g1 = -g / (u * u);
            let g2 = g * (1.0 / u.powi(4) - 2.0 / u.powi(3));
            for i in 0..d {
                for j in 0..d {
                    let di = x[i] - c3[i];
                    let dj = x[j] - c3[j];
                    h[i * d + j] = g2 * 4.0 * di * dj / (rho2 * rho2) + if i == j { g1 * 2.0 / rho2 } else { 0.0 };
                }
            }
            h
        });
        TestFunction {
            name: format!("bump(r={radius})"),
            dim,
            f,
            grad,
            hess,
            length_scale: 0.25 * radius,
            support: Some((center.clone(), radius)),
            sup_norm: amp.abs(),
            smoothness: "C_c^inf",
            tail: Tail::Compact { center, radius },
        }
    }

    /// `amp · cos(ξ·x + phase)`.
    pub fn plane_wave(xi: Vec<f64>, phase: f64, amp: f64) -> Self {
        let dim = xi.len();
        let (x1, x2, x3) = (xi.clone(), xi.clone(), xi.clone());
        let n = linalg::norm(&xi);
        TestFunction {
            name: format!("cos(xi.x+{phase})"),
            dim,
            f: Arc::new(move |x| amp * (linalg::dot(&x1, x) + phase).cos()),
            grad: Arc::new(move |x| {
                let s = -amp * (linalg::dot(&x2, x) + phase).sin();
                x2.iter().map(|k| s * k).collect()
            }),
            hess: Arc::new(move |x| {
                let c = -amp * (linalg::dot(&x3, x) + phase).cos();
                let d = x3.len();
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = c * x3[i] * x3[j];
                    }
                }
                h
            }),
            length_scale: if n > 0.0 { 1.0 / n } else { 1.0 },
            support: None,
            sup_norm: amp.abs(),
            smoothness: "analytic",
            tail: Tail::Waves(vec![Wave { amp, xi, phase }]),
        }
    }

    /// `|x|²`, which grows too fast for the operator to be defined.
    pub fn quadratic(dim: usize) -> Self {
        TestFunction {
            name: "quadratic".into(),
            dim,
            f: Arc::new(|x| linalg::dot(x, x)),
            grad: Arc::new(|x| x.iter().map(|v| 2.0 * v).collect()),
            hess: Arc::new(move |_| {
                let mut h = vec![0.0; dim * dim];
                for i in 0..dim {
                    h[i * dim + i] = 2.0;
                }
                h
            }),
            length_scale: 1.0,
            support: None,
            sup_norm: f64::INFINITY,
            smoothness: "polynomial",
            tail: Tail::Bounded { sup: f64::INFINITY },
        }
    }

    /// `Σ cᵢ fᵢ`.
    pub fn linear_combination(terms: Vec<(f64, TestFunction)>) -> Self {
        let dim = terms[0].1.dim;
        let t = Arc::new(terms);
        let (t1, t2, t3) = (t.clone(), t.clone(), t.clone());
        let support = if t.iter().all(|(_, f)| f.support.is_some()) {
            // smallest ball around the first center containing all supports
            let c0 = t[0].1.support.as_ref().unwrap().0.clone();
            let r = t
                .iter()
                .map(|(_, f)| {
                    let (c, r) = f.support.as_ref().unwrap();
                    let dc: Vec<f64> = c.iter().zip(&c0).map(|(a, b)| a - b).collect();
                    linalg::norm(&dc) + r
                })
                .fold(0.0, f64::max);
            Some((c0, r))
        } else {
            None
        };
        TestFunction {
            name: format!(
                "lincomb[{}]",
                t.iter().map(|(c, f)| format!("{c}*{}", f.name)).collect::<Vec<_>>().join("+")
            ),
            dim,
            f: Arc::new(move |x| t1.iter().map(|(c, f)| c * f.value(x)).sum()),
            grad: Arc::new(move |x| {
                let mut g = vec![0.0; x.len()];
                for (c, f) in t2.iter() {
                    linalg::axpy(*c, &f.gradient(x), &mut g);
                }
                g
            }),
            hess: Arc::new(move |x| {
                let mut h = vec![0.0; x.len() * x.len()];
                for (c, f) in t3.iter() {
                    linalg::axpy(*c, &f.hessian(x), &mut h);
                }
                h
            }),
            length_scale: t.iter().map(|(_, f)| f.length_scale).fold(f64::INFINITY, f64::min),
            support,
            sup_norm: t.iter().map(|(c, f)| c.abs() * f.sup_norm).sum(),
            smoothness: "smooth",
            tail: Tail::Sum(t.iter().map(|(c, f)| (*c, f.tail.clone())).collect()),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        TestFunction::linear_combination(vec![(c, self.clone())])
    }

    /// `x ↦ f(x − h)`.
    pub fn translate(&self, h: &[f64]) -> Self {
        let g = self.clone();
        let h = h.to_vec();
        let (g1, g2, g3) = (g.clone(), g.clone(), g.clone());
        let (h1, h2, h3) = (h.clone(), h.clone(), h.clone());
        let shift = |x: &[f64], h: &[f64]| -> Vec<f64> { x.iter().zip(h).map(|(a, b)| a - b).collect() };
        TestFunction {
            name: format!("{}(.-h)", g.name),
            dim: g.dim,
            f: Arc::new(move |x| g1.value(&shift(x, &h1))),
            grad: Arc::new(move |x| g2.gradient(&shift(x, &h2))),
            hess: Arc::new(move |x| g3.hessian(&shift(x, &h3))),
            length_scale: g.length_scale,
            support: g
                .support
                .as_ref()
                .map(|(c, r)| (c.iter().zip(&h).map(|(a, b)| a + b).collect(), *r)),
            sup_norm: g.sup_norm,
            smoothness: g.smoothness,
            tail: g.tail.translate(&h),
        }
    }

    /// Pointwise product.
    pub fn product(a: &TestFunction, b: &TestFunction) -> Self {
        let (a1, a2, a3) = (a.clone(), a.clone(), a.clone());
        let (b1, b2, b3) = (b.clone(), b.clone(), b.clone());
        let support = match (&a.support, &b.support) {
            (Some(s), _) => Some(s.clone()),
            (None, Some(s)) => Some(s.clone()),
            _ => None,
        };
        TestFunction {
            name: format!("{}*{}", a.name, b.name),
            dim: a.dim,
            f: Arc::new(move |x| a1.value(x) * b1.value(x)),
            grad: Arc::new(move |x| {
                let (fa, fb) = (a2.value(x), b2.value(x));
                let (ga, gb) = (a2.gradient(x), b2.gradient(x));
                ga.iter().zip(&gb).map(|(p, q)| p * fb + fa * q).collect()
            }),
            hess: Arc::new(move |x| {
                let d = x.len();
                let (fa, fb) = (a3.value(x), b3.value(x));
                let (ga, gb) = (a3.gradient(x), b3.gradient(x));
                let (ha, hb) = (a3.hessian(x), b3.hessian(x));
                let mut h = vec![0.0; d * d];
                for i in 0..d {
                    for j in 0..d {
                        h[i * d + j] = ha[i * d + j] * fb + fa * hb[i * d + j] + ga[i] * gb[j] + ga[j] * gb[i];
                    }
                }
                h
            }),
            length_scale: a.length_scale.min(b.length_scale),
            support,
            sup_norm: a.sup_norm * b.sup_norm,
            smoothness: "smooth",
            tail: Tail::product(&a.tail, &b.tail, a.sup_norm, b.sup_norm),
        }
    }

    /// Catalog lookup by name, centered at the origin.
    pub fn from_catalog(name: &str, dim: usize) -> Result<Self> {
        let o = vec![0.0; dim];
        let mut e1 = vec![0.0; dim];
        e1[0] = 1.0;
        Ok(match name {
            "constant" => TestFunction::constant(dim, 1.0),
            "gaussian" => TestFunction::gaussian(o, 1.0, 1.0),
            "narrow-gaussian" => TestFunction::gaussian(o, 0.25, 1.0),
            "bump" => TestFunction::bump(o, 1.0, 1.0),
            "cos" => TestFunction::plane_wave(e1, 0.0, 1.0),
            "sin" => TestFunction::plane_wave(e1, -std::f64::consts::FRAC_PI_2, 1.0),
            "quadratic" => TestFunction::quadratic(dim),
            other => return Err(CoreError::InvalidInput(format!("unknown test function {other:?}"))),
        })
    }

    pub fn catalog_names() -> &'static [&'static str] {
        &["constant", "gaussian", "narrow-gaussian", "bump", "cos", "sin", "quadratic"]
    }
}

/// `J^{(α)}_f(x, y) = f(x + y) − f(x) − y^{(α)}·∇f(x)`.
pub fn taylor_remainder(f: &TestFunction, x: &[f64], y: &[f64], alpha: f64) -> f64 {
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let base = f.value(&xy) - f.value(x);
    let comp = Compensation::for_alpha(alpha);
    if comp.active(linalg::norm(y)) {
        base - linalg::dot(y, &f.gradient(x))
    } else {
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenValue {
    pub value: f64,
    pub error: f64,
}

impl std::ops::Add for GenValue {
    type Output = GenValue;
    fn add(self, o: GenValue) -> GenValue {
        GenValue {
            value: self.value + o.value,
            error: self.error + o.error,
        }
    }
}

struct Rule {
    t: Vec<f64>,
    w: Vec<f64>,
}

fn unit_rule(n: usize) -> Rule {
    let (x, w) = gauss_legendre(n);
    Rule {
        t: x.iter().map(|v| 0.5 * (v + 1.0)).collect(),
        w: w.iter().map(|v| 0.5 * v).collect(),
    }
}

fn rules() -> &'static (Rule, Rule) {
    static R: OnceLock<(Rule, Rule)> = OnceLock::new();
    R.get_or_init(|| (unit_rule(12), unit_rule(7)))
}

fn quad_form(h: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += v[i] * h[i * d + j] * v[j];
        }
    }
    s
}

/// `∫₀^δ J(x, r v) r^{−1−α} dr` through the integral form of the remainder.
fn inner_ray(f: &TestFunction, x: &[f64], v: &[f64], alpha: f64, comp: Compensation, delta: f64) -> GenValue {
    let (fine, coarse) = rules();
    let pt = |u: f64| -> Vec<f64> { x.iter().zip(v).map(|(a, b)| a + u * b).collect() };
    let eval = |rule: &Rule| -> f64 {
        let mut total = 0.0;
        if comp == Compensation::None {
            // r ∫₀¹ v·∇f(x + s r v) ds, r = δ t^{1/(1−α)}
            let p = 1.0 / (1.0 - alpha);
            for (ti, wi) in rule.t.iter().zip(&rule.w) {
                let r = delta * ti.powf(p);
                let mut inner = 0.0;
                for (si, vi) in rule.t.iter().zip(&rule.w) {
                    inner += vi * linalg::dot(v, &f.gradient(&pt(si * r)));
                }
                total += wi * inner;
            }
            total * delta.powf(1.0 - alpha) / (1.0 - alpha)
        } else {
            // r² ∫₀¹ (1−s) vᵀH(x + s r v)v ds, r = δ t^{1/(2−α)}
            let p = 1.0 / (2.0 - alpha);
            for (ti, wi) in rule.t.iter().zip(&rule.w) {
                let r = delta * ti.powf(p);
                let mut inner = 0.0;
                for (si, vi) in rule.t.iter().zip(&rule.w) {
                    inner += vi * (1.0 - si) * quad_form(&f.hessian(&pt(si * r)), v);
                }
                total += wi * inner;
            }
            total * delta.powf(2.0 - alpha) / (2.0 - alpha)
        }
    };
    let a = eval(fine);
    let b = eval(coarse);
    GenValue {
        value: a,
        error: (a - b).abs() + 1e-15 * a.abs(),
    }
}

/// Full ray contribution `∫₀^∞ J(x, r v) r^{−1−α} dr` (without the weight).
fn ray_integral(f: &TestFunction, x: &[f64], fx: f64, gx: &[f64], v: &[f64], alpha: f64, comp: Compensation, delta: f64) -> Result<GenValue> {
    let vn = linalg::norm(v);
    if vn == 0.0 {
        return Ok(GenValue { value: 0.0, error: 0.0 });
    }
    let inner = inner_ray(f, x, v, alpha, comp, delta);
    let lv = f.length_scale / vn;
    let entry = f.tail.ray_entry(x, v).max(delta);
    let extent = f.tail.ray_extent(x, v);
    let exact_tail = f.tail.is_exact();
    let end = match extent {
        Some(e) => e.max(delta),
        None if exact_tail => delta + 30.0 * lv,
        None => delta.max(1e3 * lv),
    };
    let mut outer_val = 0.0;
    let mut outer_err = 0.0;
    if end > entry {
        let mut breaks = vec![entry];
        let mut r = entry;
        while r < end && breaks.len() < 20_000 {
            let step = r.min(lv);
            r = (r + step).min(end);
            breaks.push(r);
        }
        if *breaks.last().unwrap() < end {
            breaks.push(end);
        }
        let scale = f.sup_norm.min(1e300) * delta.powf(-alpha);
        let q = integrate_breaks(
            |r| {
                let p: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + r * b).collect();
                f.value(&p) * r.powf(-1.0 - alpha)
            },
            &breaks,
            QuadOpts {
                abs_tol: 1e-13 * scale,
                rel_tol: 1e-12,
                max_intervals: 50_000,
            },
        );
        if !q.converged {
            return Err(CoreError::Accuracy {
                context: format!("outer radial quadrature for {}", f.name),
                partial: q.value,
                error: q.error,
            });
        }
        outer_val = q.value;
        outer_err = q.error;
    }
    let (tail, tail_err) = f.tail.ray_tail(x, v, end.max(entry), 1.0 + alpha)?;
    // closed-form ∫_δ^∞ (f(x) + c(r) r v·∇f(x)) r^{−1−α} dr
    let dv = linalg::dot(v, gx);
    let lin = match comp {
        Compensation::None => 0.0,
        Compensation::Full => dv * delta.powf(1.0 - alpha) / (alpha - 1.0),
        Compensation::Truncated => -dv * delta.ln(),
    };
    let analytic = fx * delta.powf(-alpha) / alpha + lin;
    Ok(GenValue {
        value: inner.value + outer_val + tail - analytic,
        error: inner.error + outer_err + tail_err + 1e-15 * analytic.abs(),
    })
}

/// Direction set `(σθ, weight)` for a measure at one point.
fn rays(measure: &SphericalMeasure, sigma: &Mat, level: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    match measure {
        SphericalMeasure::Atoms { atoms, .. } => Ok(atoms
            .iter()
            .filter(|a| a.weight > 0.0)
            .map(|a| (linalg::mat_vec(sigma, &a.direction), a.weight))
            .collect()),
        SphericalMeasure::Isotropic { dim, mass } => {
            let d = *dim;
            let mut out = Vec::new();
            match d {
                1 => {
                    out.push((linalg::mat_vec(sigma, &[1.0]), mass / 2.0));
                    out.push((linalg::mat_vec(sigma, &[-1.0]), mass / 2.0));
                }
                2 => {
                    let n = 16 << level;
                    for k in 0..n {
                        let phi = std::f64::consts::TAU * (k as f64 + 0.5) / n as f64;
                        out.push((linalg::mat_vec(sigma, &[phi.cos(), phi.sin()]), mass / n as f64));
                    }
                }
                3 => {
                    let n = 8 << level;
                    let (z, wz) = gauss_legendre(n);
                    let m = 2 * n;
                    for (zi, wi) in z.iter().zip(&wz) {
                        let s = (1.0 - zi * zi).sqrt();
                        for k in 0..m {
                            let phi = std::f64::consts::TAU * (k as f64 + 0.5) / m as f64;
                            let dir = [s * phi.cos(), s * phi.sin(), *zi];
                            // wz sums to 2, the azimuth to 2π; normalize to total mass
                            out.push((linalg::mat_vec(sigma, &dir), mass * wi / (2.0 * m as f64)));
                        }
                    }
                }
                _ => {
                    return Err(CoreError::UnsupportedConfiguration(
                        "isotropic generator quadrature is implemented for d ≤ 3".into(),
                    ))
                }
            }
            Ok(out)
        }
    }
}

/// `∫ J^{(α_c)}_f(x, σy) ν(dy)` for a stable measure ν, with compensator of
/// exponent `alpha_conv`.
pub fn levy_operator(measure: &StableMeasure, sigma: &Mat, f: &TestFunction, x: &[f64], alpha_conv: f64) -> Result<GenValue> {
    let d = measure.dim();
    if f.dim != d || x.len() != d || sigma.nrows() != d {
        return Err(CoreError::DimensionMismatch { expected: d, found: x.len() });
    }
    if measure.total_mass() == 0.0 || matches!(f.tail, Tail::Constant(_)) {
        return Ok(GenValue { value: 0.0, error: 0.0 });
    }
    check_growth(f, x, measure.alpha)?;
    let alpha = measure.alpha;
    let comp = Compensation::for_alpha(alpha_conv);
    match comp {
        Compensation::Full if alpha <= 1.0 => {
            return Err(CoreError::DivergentIntegral("full compensation needs alpha > 1".into()))
        }
        Compensation::None if alpha >= 1.0 => {
            return Err(CoreError::DivergentIntegral("uncompensated operator needs alpha < 1".into()))
        }
        _ => {}
    }
    let delta = (0.1 * f.length_scale).clamp(1e-4, 1.0);
    let fx = f.value(x);
    let gx = f.gradient(x);
    let ray = |v: &[f64]| ray_integral(f, x, fx, &gx, v, alpha, comp, delta);
    match &measure.spherical {
        SphericalMeasure::Isotropic { dim, mass } if *dim >= 2 => {
            let scale = f.sup_norm.min(1e300) * f.length_scale.powf(-alpha);
            let normal = first_wave(&f.tail).map(|xi| linalg::mat_t_vec(sigma, xi));
            sphere_average(*dim, sigma, scale, normal.as_deref(), &ray).map(|v| GenValue {
                value: mass * v.value,
                error: mass * v.error,
            })
        }
        _ => {
            let mut acc = GenValue { value: 0.0, error: 0.0 };
            for (v, w) in rays(&measure.spherical, sigma, 0)? {
                let r = ray(&v)?;
                acc.value += w * r.value;
                acc.error += w * r.error;
            }
            Ok(acc)
        }
    }
}

fn first_wave(t: &Tail) -> Option<&[f64]> {
    match t {
        Tail::Waves(ws) => ws.iter().find(|w| linalg::norm(&w.xi) > 0.0).map(|w| w.xi.as_slice()),
        Tail::Sum(v) => v.iter().find_map(|(_, t)| first_wave(t)),
        _ => None,
    }
}

/// Average of `g(σθ)` over the unit sphere in d = 2, 3 by adaptive
/// Gauss–Kronrod in the angles. Ray integrals of waves have a kink on the
/// great circle `θ ⊥ n`; when `n` is given the angles are laid out so that
/// the kink falls on a breakpoint.
fn sphere_average(
    dim: usize,
    sigma: &Mat,
    scale: f64,
    normal: Option<&[f64]>,
    g: &dyn Fn(&[f64]) -> Result<GenValue>,
) -> Result<GenValue> {
    use std::cell::{Cell, RefCell};
    use std::f64::consts::{FRAC_PI_2, TAU};
    let failure = RefCell::new(None);
    let ray_err = Cell::new(0.0f64);
    let eval = |dir: &[f64]| -> f64 {
        match g(&linalg::mat_vec(sigma, dir)) {
            Ok(r) => {
                ray_err.set(ray_err.get().max(r.error));
                r.value
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let normal = normal.filter(|n| linalg::norm(n) > 0.0);
    let mut phi_breaks: Vec<f64> = (0..=8).map(|k| TAU * k as f64 / 8.0).collect();
    if dim == 2 {
        if let Some(n) = normal {
            let a = n[1].atan2(n[0]);
            for k in [a + FRAC_PI_2, a - FRAC_PI_2] {
                phi_breaks.push(k.rem_euclid(TAU));
            }
            phi_breaks.sort_by(f64::total_cmp);
            phi_breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        }
    }
    // orthonormal frame (e1, e2, pole) for d = 3
    let frame: [Vec<f64>; 3] = if dim == 3 {
        let pole = match normal {
            Some(n) => {
                let l = linalg::norm(n);
                n.iter().map(|v| v / l).collect::<Vec<f64>>()
            }
            None => vec![0.0, 0.0, 1.0],
        };
        let helper = if pole[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
        let dp = linalg::dot(&helper, &pole);
        let mut e1: Vec<f64> = helper.iter().zip(&pole).map(|(h, p)| h - dp * p).collect();
        let l = linalg::norm(&e1);
        e1.iter_mut().for_each(|v| *v /= l);
        let e2 = vec![
            pole[1] * e1[2] - pole[2] * e1[1],
            pole[2] * e1[0] - pole[0] * e1[2],
            pole[0] * e1[1] - pole[1] * e1[0],
        ];
        [e1, e2, pole]
    } else {
        [vec![], vec![], vec![]]
    };
    let opts = |abs: f64, rel: f64| QuadOpts {
        abs_tol: abs,
        rel_tol: rel,
        max_intervals: 400,
    };
    let accuracy = |q: &crate::quad::QuadResult, c: f64| CoreError::Accuracy {
        context: "angular quadrature".into(),
        partial: c * q.value,
        error: c * q.error,
    };
    let inner_failed = Cell::new(false);
    let (q, c) = match dim {
        2 => (integrate_breaks(|phi| eval(&[phi.cos(), phi.sin()]), &phi_breaks, opts(1e-11 * scale, 1e-10)), 1.0 / TAU),
        3 => {
            // z = sin u keeps the polar integrand smooth at the poles
            let q = integrate_breaks(
                |u| {
                    let (z, s) = (u.sin(), u.cos());
                    let qi = integrate_breaks(
                        |phi| {
                            let (a, b) = (s * phi.cos(), s * phi.sin());
                            let dir: Vec<f64> = (0..3).map(|i| a * frame[0][i] + b * frame[1][i] + z * frame[2][i]).collect();
                            eval(&dir)
                        },
                        &phi_breaks,
                        opts(1e-7 * scale, 1e-7),
                    );
                    if !qi.converged {
                        inner_failed.set(true);
                    }
                    s * qi.value
                },
                &[-FRAC_PI_2, -0.75, 0.0, 0.75, FRAC_PI_2],
                opts(1e-7 * scale, 1e-7),
            );
            (q, 1.0 / (2.0 * TAU))
        }
        _ => {
            return Err(CoreError::UnsupportedConfiguration(
                "isotropic generator quadrature is implemented for d ≤ 3".into(),
            ))
        }
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if !q.converged || inner_failed.get() {
        return Err(accuracy(&q, c));
    }
    Ok(GenValue {
        value: c * q.value,
        error: c * q.error + ray_err.get(),
    })
}

/// Numerical growth probe: the operator is only defined when
/// `|f| + |∇f| + |H_f|` grows slower than `|x|^α`.
pub fn growth_exponent(f: &TestFunction, x: &[f64]) -> f64 {
    let d = f.dim;
    let mut radii = Vec::new();
    let mut vals = Vec::new();
    for k in 0..7 {
        let r = 10.0 * f.length_scale.max(1e-3) * 4f64.powi(k) + linalg::norm(x);
        let mut m: f64 = 0.0;
        for i in 0..d {
            for s in [1.0, -1.0] {
                let mut p = x.to_vec();
                p[i] += s * r;
                let h = f.hessian(&p);
                let hn = h.iter().map(|v| v * v).sum::<f64>().sqrt();
                m = m.max(f.value(&p).abs() + linalg::norm(&f.gradient(&p)) + hn);
            }
        }
        radii.push(r);
        vals.push(m.max(1e-300));
    }
    let n = radii.len();
    crate::stats::loglog_fit(&radii[n - 4..], &vals[n - 4..]).slope
}

fn check_growth(f: &TestFunction, x: &[f64], alpha: f64) -> Result<()> {
    if f.support.is_some() {
        return Ok(());
    }
    let g = growth_exponent(f, x);
    if g >= alpha - 1e-3 {
        return Err(CoreError::Domain(format!(
            "{} grows like |x|^{g:.3}, not slower than |x|^{alpha}; the integral diverges",
            f.name
        )));
    }
    Ok(())
}

/// `A_t f(x) = ∫ J^{(α)}_f(x, σ_{t,x} y) ν_{t,x}(dy) + 1_{α=1} b_{t,x}·∇f(x)`.
pub fn apply_a(model: &LevyModel, f: &TestFunction, t: f64, x: &[f64]) -> Result<GenValue> {
    let nu = model.nu_at(t, x);
    let sigma = model.sigma.eval(t, x);
    let mut v = levy_operator(&nu, &sigma, f, x, model.alpha())?;
    if model.alpha() == 1.0 {
        let b = model.drift.eval(t, x);
        v.value += linalg::dot(&b, &f.gradient(x));
    }
    Ok(v)
}

/// Regime of the lower-order exponent and the two exponents used to split
/// the B estimate around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerOrderTelemetry {
    pub regime: &'static str,
    pub beta: f64,
    pub alpha: f64,
    pub theta1: f64,
    pub theta2: f64,
}

pub fn lower_order_split(alpha: f64, beta: f64) -> LowerOrderTelemetry {
    let (regime, theta1, theta2) = if beta < 1.0 {
        ("beta<1", 0.5 * (beta + alpha.min(1.0)), 0.5 * beta)
    } else if beta == 1.0 {
        ("beta=1", 0.5 * (1.0 + alpha), 0.5)
    } else {
        ("beta>1", 0.5 * (beta + alpha), 0.5 * (1.0 + beta))
    };
    LowerOrderTelemetry {
        regime,
        beta,
        alpha,
        theta1,
        theta2,
    }
}

/// `B_t f(x) = ∫ J^{(β)}_f(x, σ̄ y) ν̄(dy) + 1_{α∈(1,2)} b̄·∇f(x)`.
pub fn apply_b(model: &LevyModel, f: &TestFunction, t: f64, x: &[f64]) -> Result<(GenValue, Option<LowerOrderTelemetry>)> {
    let Some(lo) = &model.lower_order else {
        return Ok((GenValue { value: 0.0, error: 0.0 }, None));
    };
    let sigma_bar = lo.sigma_bar.eval(t, x);
    let mut v = levy_operator(&lo.nu_bar, &sigma_bar, f, x, lo.beta())?;
    let alpha = model.alpha();
    if alpha > 1.0 {
        v.value += linalg::dot(&lo.b_bar.eval(t, x), &f.gradient(x));
    }
    Ok((v, Some(lower_order_split(alpha, lo.beta()))))
}

/// `𝓛 = A + B`.
pub fn apply_l(model: &LevyModel, f: &TestFunction, t: f64, x: &[f64]) -> Result<GenValue> {
    Ok(apply_a(model, f, t, x)? + apply_b(model, f, t, x)?.0)
}

/// `∫ (f(x+σy) − f(x))(g(x+σy) − g(x)) ν(dy)` computed ray by ray.
pub fn carre_du_champ(model: &LevyModel, f: &TestFunction, g: &TestFunction, t: f64, x: &[f64]) -> Result<GenValue> {
    let nu = model.nu_at(t, x);
    let sigma = model.sigma.eval(t, x);
    let alpha = nu.alpha;
    let fg = TestFunction::product(f, g);
    let fx = f.value(x);
    let gx = g.value(x);
    let delta = (0.1 * f.length_scale.min(g.length_scale)).clamp(1e-4, 1.0);
    let (fine, coarse) = rules();
    let mut total = GenValue { value: 0.0, error: 0.0 };
    for (v, w) in rays(&nu.spherical, &sigma, 2)? {
        let vn = linalg::norm(&v);
        if vn == 0.0 {
            continue;
        }
        let pt = |u: f64| -> Vec<f64> { x.iter().zip(&v).map(|(a, b)| a + u * b).collect() };
        let p = 1.0 / (2.0 - alpha);
        let inner = |rule: &Rule| -> f64 {
            let mut s = 0.0;
            for (ti, wi) in rule.t.iter().zip(&rule.w) {
                let r = delta * ti.powf(p);
                let (mut a, mut b) = (0.0, 0.0);
                for (si, vi) in rule.t.iter().zip(&rule.w) {
                    let q = pt(si * r);
                    a += vi * linalg::dot(&v, &f.gradient(&q));
                    b += vi * linalg::dot(&v, &g.gradient(&q));
                }
                s += wi * a * b;
            }
            s * delta.powf(2.0 - alpha) / (2.0 - alpha)
        };
        let i1 = inner(fine);
        let i2 = inner(coarse);
        // outer: (fg)(x+rv) − f(x) g(x+rv) − g(x) f(x+rv) + f(x)g(x)
        let lv = fg.length_scale / vn;
        let ext = [fg.tail.ray_extent(x, &v), f.tail.ray_extent(x, &v), g.tail.ray_extent(x, &v)];
        let end = if ext.iter().all(|e| e.is_some()) {
            ext.iter().map(|e| e.unwrap()).fold(delta, f64::max)
        } else {
            delta + 30.0 * lv
        };
        let mut breaks = vec![delta];
        let mut r = delta;
        while r < end {
            r = (r + r.min(lv)).min(end);
            breaks.push(r);
        }
        let q = integrate_breaks(
            |r| {
                let p = pt(r);
                (fg.value(&p) - fx * g.value(&p) - gx * f.value(&p)) * r.powf(-1.0 - alpha)
            },
            &breaks,
            QuadOpts::tol(1e-13 * f.sup_norm * g.sup_norm * delta.powf(-alpha), 1e-12),
        );
        let (t1, e1) = fg.tail.ray_tail(x, &v, end, 1.0 + alpha)?;
        let (t2, e2) = g.tail.ray_tail(x, &v, end, 1.0 + alpha)?;
        let (t3, e3) = f.tail.ray_tail(x, &v, end, 1.0 + alpha)?;
        let val = i1 + q.value + t1 - fx * t2 - gx * t3 + fx * gx * delta.powf(-alpha) / alpha;
        total.value += w * val;
        total.error += w * ((i1 - i2).abs() + q.error + e1 + e2 + e3);
    }
    Ok(total)
}

/// `sup_{x ∈ grid, y ∈ ladder} |J^{(α)}_f(x, y)| / |y|^α` over a dyadic ladder of
/// radii `2^{k/m}` (k from −20m to 6m) along ±eᵢ and the diagonals.
pub fn remainder_ratio_estimate(f: &TestFunction, grid: &[Vec<f64>], alpha: f64, per_octave: usize) -> f64 {
    let d = f.dim;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..d {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; d];
            e[i] = s;
            dirs.push(e);
        }
    }
    if d > 1 {
        let s = 1.0 / (d as f64).sqrt();
        dirs.push(vec![s; d]);
        dirs.push(vec![-s; d]);
    }
    let m = per_octave.max(1) as i32;
    let best = grid
        .par_iter()
        .map(|x| {
            let mut b: f64 = 0.0;
            for k in (-20 * m)..=(6 * m) {
                let r = 2f64.powf(k as f64 / m as f64);
                for e in &dirs {
                    let y: Vec<f64> = e.iter().map(|v| v * r).collect();
                    b = b.max(taylor_remainder(f, x, &y, alpha).abs() / r.powf(alpha));
                }
            }
            b
        })
        .collect::<Vec<f64>>();
    best.into_iter().fold(0.0, f64::max)
}

/// Which operator a table holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operator {
    A,
    L,
}

/// Cubic interpolation table of `Af` or `𝓛f` for time-homogeneous models on
/// a box in d ≤ 2; points outside the box are evaluated directly.
pub struct GeneratorTable {
    model: LevyModel,
    f: TestFunction,
    op: Operator,
    lo: Vec<f64>,
    h: Vec<f64>,
    n: usize,
    values: Vec<f64>,
    pub max_quadrature_error: f64,
    pub interpolation_error: f64,
}

impl GeneratorTable {
    pub fn build(model: &LevyModel, f: &TestFunction, op: Operator, lo: &[f64], hi: &[f64], n: usize) -> Result<Self> {
        let d = model.dim();
        if !model.is_time_homogeneous() {
            return Err(CoreError::UnsupportedConfiguration("tables need time-homogeneous coefficients".into()));
        }
        if d > 2 || lo.len() != d || hi.len() != d {
            return Err(CoreError::UnsupportedConfiguration("tables support d ≤ 2".into()));
        }
        let h: Vec<f64> = lo.iter().zip(hi).map(|(a, b)| (b - a) / (n - 1) as f64).collect();
        let count = n.pow(d as u32);
        let eval = |x: &[f64]| -> Result<GenValue> {
            match op {
                Operator::A => apply_a(model, f, 0.0, x),
                Operator::L => apply_l(model, f, 0.0, x),
            }
        };
        let node = |idx: usize| -> Vec<f64> {
            let mut p = Vec::with_capacity(d);
            let mut r = idx;
            for k in 0..d {
                p.push(lo[k] + h[k] * (r % n) as f64);
                r /= n;
            }
            p
        };
        let vals: Vec<GenValue> = (0..count).into_par_iter().map(|i| eval(&node(i))).collect::<Result<_>>()?;
        let mut table = GeneratorTable {
            model: model.clone(),
            f: f.clone(),
            op,
            lo: lo.to_vec(),
            h,
            n,
            values: vals.iter().map(|v| v.value).collect(),
            max_quadrature_error: vals.iter().map(|v| v.error).fold(0.0, f64::max),
            interpolation_error: 0.0,
        };
        // interpolation error probed at cell midpoints spread over the box
        let probes: Vec<Vec<f64>> = (0..64)
            .map(|k| {
                (0..d)
                    .map(|j| {
                        let cell = ((k * (7 + 13 * j) + 3) % (n - 3)) + 1;
                        table.lo[j] + table.h[j] * (cell as f64 + 0.5)
                    })
                    .collect()
            })
            .collect();
        let err = probes
            .par_iter()
            .map(|p| eval(p).map(|v| (v.value - table.interpolate(p).unwrap_or(v.value)).abs()))
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        table.interpolation_error = err;
        Ok(table)
    }

    fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let d = x.len();
        let mut base = [0usize; 2];
        let mut frac = [0.0f64; 2];
        for k in 0..d {
            let u = (x[k] - self.lo[k]) / self.h[k];
            if !(u >= 1.0 && u <= (self.n - 2) as f64) {
                return None;
            }
            let i = (u.floor() as usize).min(self.n - 3);
            base[k] = i - 1;
            frac[k] = u - i as f64;
        }
        let w = |s: f64| -> [f64; 4] {
            // Lagrange weights on nodes −1, 0, 1, 2
            [
                -s * (s - 1.0) * (s - 2.0) / 6.0,
                (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0,
                -(s + 1.0) * s * (s - 2.0) / 2.0,
                (s + 1.0) * s * (s - 1.0) / 6.0,
            ]
        };
        if d == 1 {
            let wx = w(frac[0]);
            Some((0..4).map(|a| wx[a] * self.values[base[0] + a]).sum())
        } else {
            let wx = w(frac[0]);
            let wy = w(frac[1]);
            let mut s = 0.0;
            for b in 0..4 {
                for a in 0..4 {
                    s += wx[a] * wy[b] * self.values[(base[1] + b) * self.n + base[0] + a];
                }
            }
            Some(s)
        }
    }

    /// Table value, or a direct evaluation outside the box.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        match self.interpolate(x) {
            Some(v) => Ok(v),
            None => Ok(match self.op {
                Operator::A => apply_a(&self.model, &self.f, 0.0, x)?.value,
                Operator::L => apply_l(&self.model, &self.f, 0.0, x)?.value,
            }),
        }
    }
}
