use std::path::Path;

use rand::Rng;
use serde::Deserialize;
use stablelike::rng;
use stablelike::inequalities::{
    abs_power_sweep, le52_check, le5_check, cos_sin_pair_sample, pair_sample, sup_ratio_search, SupRatio,
};

use crate::config::{self, Tolerances};
use crate::output::{num, nums, Outcome, Table};
use crate::RunError;

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct AbsPower {
    pairs: usize,
    q_values: Vec<f64>,
    d: usize,
}

impl Default for AbsPower {
    fn default() -> Self {
        AbsPower {
            pairs: 1_000_000,
            q_values: vec![0.1, 0.25, 0.5, 0.75, 0.9, 1.0],
            d: 3,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SignedPower {
    q: f64,
    d: usize,
    initial: usize,
    budget: usize,
}

impl Default for SignedPower {
    fn default() -> Self {
        SignedPower {
            q: 0.5,
            d: 1,
            initial: 1000,
            budget: 64_000,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CosSin {
    alpha: f64,
    beta: f64,
    initial: usize,
    budget: usize,
}

impl Default for CosSin {
    fn default() -> Self {
        CosSin {
            alpha: 0.5,
            beta: 0.5,
            initial: 32,
            budget: 128,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Homogeneity {
    scales: Vec<f64>,
    alphas: Vec<f64>,
    cos_sin_pairs: Vec<(f64, f64)>,
    signed_power_pairs: usize,
    signed_power_d: usize,
}

impl Default for Homogeneity {
    fn default() -> Self {
        Homogeneity {
            scales: vec![0.125, 2.0, 16.0],
            alphas: vec![0.5, 1.0, 1.5],
            cos_sin_pairs: vec![(1.0, 0.3), (1.0, -0.7), (2.0, -3.0)],
            signed_power_pairs: 200,
            signed_power_d: 3,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IneqConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    #[serde(default)]
    abs_power: AbsPower,
    #[serde(default)]
    signed_power: SignedPower,
    #[serde(default)]
    cos_sin: CosSin,
    #[serde(default)]
    homogeneity: Homogeneity,
}

fn search_rows(t: &mut Table, name: &str, s: &SupRatio) {
    for (n, v) in &s.history {
        t.push(vec![name.into(), n.to_string(), num(*v)]);
    }
}

pub fn run(raw: Option<&str>, _base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: IneqConfig = match raw {
        None => IneqConfig::default(),
        Some(_) => config::parse(raw)?,
    };
    let tol = cfg.tolerances.resolve(&[("cos_sin_homogeneity", 1e-6), ("signed_power_homogeneity", 1e-10)])?;
    let seed = config::require_seed(seed, cfg.seed)?;
    let mut out = Outcome::new("ineq-suite", Some(seed));
    let mut worst = Table::new("worst_cases", &["check", "parameter", "evaluations", "violations", "worst_ratio", "worst_input"]);
    let mut sweeps = Table::new("sweeps", &["search", "evaluations", "running_max"]);

    let ap = &cfg.abs_power;
    config::at_least("abs_power.pairs", ap.pairs, 1)?;
    let mut total_viol = 0;
    let mut ap_rows = Vec::new();
    for (i, q) in ap.q_values.iter().enumerate() {
        let s = abs_power_sweep(*q, ap.d, ap.pairs, rng::derive_seed(seed, i as u64))?;
        total_viol += s.violations;
        worst.push(vec!["abs_power".into(), num(*q), s.pairs.to_string(), s.violations.to_string(), num(s.worst_ratio), nums(&s.worst_input)]);
        ap_rows.push(s);
    }
    out.check(
        "abs_power_no_violations",
        total_viol == 0,
        format!("{total_viol} violations in {} pairs per q over {:?}", ap.pairs, ap.q_values),
    );

    let h = &cfg.homogeneity;
    let mut cos_sin_dev = 0f64;
    for alpha in &h.alphas {
        for (a, b) in &h.cos_sin_pairs {
            let base = le5_check(*a, *b, *alpha, cfg.cos_sin.beta)?.lhs;
            for lam in &h.scales {
                let scaled = le5_check(lam * a, lam * b, *alpha, cfg.cos_sin.beta)?.lhs;
                let dev = (scaled / (lam.powf(*alpha) * base) - 1.0).abs();
                cos_sin_dev = cos_sin_dev.max(dev);
            }
        }
    }
    out.check("cos_sin_homogeneity", cos_sin_dev <= tol["cos_sin_homogeneity"], format!("max relative deviation {cos_sin_dev}"));
    let mut signed_power_dev = 0f64;
    for i in 0..h.signed_power_pairs {
        // uniform pairs: the stratified sampler's near-coincident pairs put the
        // cancellation error of the left side far above the tolerance
        let mut r = rng::stream(rng::derive_seed(seed, 0x4d4f), rng::channel::SEARCH, i as u64);
        let x: Vec<f64> = (0..h.signed_power_d).map(|_| r.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = (0..h.signed_power_d).map(|_| r.random_range(-10.0..10.0)).collect();
        let r0 = le52_check(&x, &y, cfg.signed_power.q)?.ratio();
        for lam in &h.scales {
            let xs: Vec<f64> = x.iter().map(|v| lam * v).collect();
            let ys: Vec<f64> = y.iter().map(|v| lam * v).collect();
            let r = le52_check(&xs, &ys, cfg.signed_power.q)?.ratio();
            signed_power_dev = signed_power_dev.max((r - r0).abs() / r0.max(f64::MIN_POSITIVE));
        }
    }
    out.check("signed_power_homogeneity", signed_power_dev <= tol["signed_power_homogeneity"], format!("max relative deviation {signed_power_dev}"));

    let l52 = &cfg.signed_power;
    let (q, d) = (l52.q, l52.d);
    // sample 0 is the antipodal witness x = −y, where the ratio is 2^{1−q}
    let sampler = |i: usize| {
        if i == 0 {
            let mut x = vec![0.0; d];
            x[0] = 1.0;
            (x.clone(), x.iter().map(|v| -v).collect::<Vec<_>>())
        } else {
            pair_sample(seed, d, i)
        }
    };
    let ratio = |p: &(Vec<f64>, Vec<f64>)| -> stablelike::Result<(f64, Vec<f64>)> {
        let c = le52_check(&p.0, &p.1, q)?;
        Ok((c.ratio(), c.inputs))
    };
    let s52 = sup_ratio_search(sampler, ratio, l52.initial, l52.budget)?;
    search_rows(&mut sweeps, "signed_power", &s52);
    worst.push(vec!["signed_power_sup".into(), num(q), s52.evaluations.to_string(), String::new(), num(s52.constant), nums(&s52.argmax)]);
    out.check("signed_power_search_stable", s52.stable, format!("constant {} after {} evaluations", s52.constant, s52.evaluations));

    let l5 = &cfg.cos_sin;
    let sampler = |i: usize| cos_sin_pair_sample(seed, i);
    let ratio = |p: &(f64, f64)| -> stablelike::Result<(f64, Vec<f64>)> {
        let c = le5_check(p.0, p.1, l5.alpha, l5.beta)?;
        Ok((c.ratio(), c.inputs))
    };
    let s5 = sup_ratio_search(sampler, ratio, l5.initial, l5.budget)?;
    search_rows(&mut sweeps, "cos_sin", &s5);
    worst.push(vec!["cos_sin_sup".into(), num(l5.alpha), s5.evaluations.to_string(), String::new(), num(s5.constant), nums(&s5.argmax)]);
    out.check("cos_sin_search_stable", s5.stable, format!("constant {} after {} evaluations", s5.constant, s5.evaluations));

    out.tables.push(worst);
    out.tables.push(sweeps);
    out.report = serde_json::json!({
        "abs_power": ap_rows,
        "cos_sin_homogeneity_deviation": cos_sin_dev,
        "signed_power_homogeneity_deviation": signed_power_dev,
        "signed_power_search": s52,
        "cos_sin_search": s5,
        "tolerances": tol,
    });
    Ok(out)
}
