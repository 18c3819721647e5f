//! Summary statistics and the few hypothesis tests the checks rely on.

use rand::Rng;
use rayon::prelude::*;
use statrs::function::erf::erfc;

use crate::rng;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n-1 denominator.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n as f64 - 1.0)
}

/// Standard error of the mean from the CLT.
pub fn stderr(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Bootstrap standard error of the mean. Resample `b` uses stream `b`, so the
/// result does not depend on the thread count.
pub fn bootstrap_stderr(xs: &[f64], resamples: usize, seed: u64) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let means: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, rng::channel::BOOTSTRAP, b as u64);
            let mut s = 0.0;
            for _ in 0..n {
                s += xs[r.random_range(0..n)];
            }
            s / n as f64
        })
        .collect();
    variance(&means).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Kolmogorov survival function `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannKendall {
    pub s: i64,
    pub z: f64,
    /// Two-sided p-value; exact permutation distribution for n ≤ 8.
    pub p_value: f64,
}

fn mk_statistic(xs: &[f64]) -> i64 {
    let mut s = 0i64;
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            s += match xs[j].partial_cmp(&xs[i]) {
                Some(std::cmp::Ordering::Greater) => 1,
                Some(std::cmp::Ordering::Less) => -1,
                _ => 0,
            };
        }
    }
    s
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

/// Mann–Kendall trend test.
pub fn mann_kendall(xs: &[f64]) -> MannKendall {
    let n = xs.len();
    let s = mk_statistic(xs);
    let nf = n as f64;
    let var = nf * (nf - 1.0) * (2.0 * nf + 5.0) / 18.0;
    let z = if s == 0 || var == 0.0 {
        0.0
    } else {
        (s - s.signum()) as f64 / var.sqrt()
    };
    let p_value = if n < 2 {
        1.0
    } else if n <= 8 {
        let perms = permutations(n);
        let extreme = perms
            .iter()
            .filter(|p| {
                let v: Vec<f64> = p.iter().map(|&k| k as f64).collect();
                mk_statistic(&v).abs() >= s.abs()
            })
            .count();
        extreme as f64 / perms.len() as f64
    } else {
        2.0 * (1.0 - normal_cdf(z.abs()))
    };
    MannKendall { s, z, p_value }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares fit `y = intercept + slope·x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LineFit {
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_stderr = if n > 2.0 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        slope_stderr,
    }
}

/// Weighted least squares with weights `1/σ²`; returns intercept, slope and
/// the standard error of the intercept.
pub fn weighted_line(x: &[f64], y: &[f64], sigma: &[f64]) -> (f64, f64, f64) {
    let mut s = 0.0;
    let mut sx = 0.0;
    let mut sy = 0.0;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((&xi, &yi), &si) in x.iter().zip(y).zip(sigma) {
        let w = 1.0 / (si * si);
        s += w;
        sx += w * xi;
        sy += w * yi;
        sxx += w * xi * xi;
        sxy += w * xi * yi;
    }
    let det = s * sxx - sx * sx;
    let intercept = (sxx * sy - sx * sxy) / det;
    let slope = (s * sxy - sx * sy) / det;
    (intercept, slope, (sxx / det).sqrt())
}

/// Slope of `log y` against `log x`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> LineFit {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    linear_fit(&lx, &ly)
}

fn centered_distances(v: &[Vec<f64>]) -> Vec<f64> {
    let n = v.len();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d: f64 = v[i]
                .iter()
                .zip(&v[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            a[i * n + j] = d;
        }
    }
    let row: Vec<f64> = (0..n).map(|i| a[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let all = row.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] += all - row[i] - row[j];
        }
    }
    a
}

fn dcor_from(a: &[f64], b: &[f64], perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut ab = 0.0;
    let mut aa = 0.0;
    let mut bb = 0.0;
    for i in 0..n {
        for j in 0..n {
            let x = a[i * n + j];
            let y = b[perm[i] * n + perm[j]];
            ab += x * y;
            aa += x * x;
            bb += y * y;
        }
    }
    if aa <= 0.0 || bb <= 0.0 {
        return 0.0;
    }
    (ab / (aa * bb).sqrt()).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndependenceTest {
    pub dcor: f64,
    pub p_value: f64,
}

/// Distance-correlation permutation test. The threshold is calibrated by
/// permuting one sample, so it adapts to the sample size.
pub fn distance_correlation_test(
    x: &[Vec<f64>],
    y: &[Vec<f64>],
    permutations_count: usize,
    seed: u64,
) -> IndependenceTest {
    use rand::seq::SliceRandom;
    let n = x.len();
    let a = centered_distances(x);
    let b = centered_distances(y);
    let id: Vec<usize> = (0..n).collect();
    let observed = dcor_from(&a, &b, &id);
    let exceed = (0..permutations_count)
        .into_par_iter()
        .filter(|&k| {
            let mut r = rng::stream(seed, rng::channel::BOOTSTRAP, 1_000_000 + k as u64);
            let mut p = id.clone();
            p.shuffle(&mut r);
            dcor_from(&a, &b, &p) >= observed
        })
        .count();
    IndependenceTest {
        dcor: observed,
        p_value: (exceed as f64 + 1.0) / (permutations_count as f64 + 1.0),
    }
}
