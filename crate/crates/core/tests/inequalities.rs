use proptest::prelude::*;
use stablelike::inequalities::*;
use stablelike::symbol::radial_constant;

/// `∫₀^∞ |sin r| r^{−s} dr` summed over half periods with Gauss–Legendre and
/// a mean-value tail; independent of the Fourier-series tails.
fn abs_sin_oracle(s: f64) -> f64 {
    let (x, w) = stablelike::quad::gauss_legendre(40);
    let pi = std::f64::consts::PI;
    // first half period with r = π t^k to absorb r^{1−s}
    let k = 1.0 / (2.0 - s);
    let mut total = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let t = 0.5 * (xi + 1.0);
        let r = pi * t.powf(k);
        total += 0.5 * wi * r.sin() * r.powf(-s) * pi * k * t.powf(k - 1.0);
    }
    let n = 200_000;
    for j in 1..n {
        let a = j as f64 * pi;
        let mut part = 0.0;
        for (xi, wi) in x.iter().zip(&w) {
            let r = a + 0.5 * pi * (xi + 1.0);
            part += 0.5 * pi * wi * r.sin().abs() * r.powf(-s);
        }
        total += part;
    }
    // beyond Nπ the mean of |sin| is 2/π; the correction is O((Nπ)^{−s})
    let r0 = n as f64 * pi;
    total + (2.0 / pi) * r0.powf(1.0 - s) / (s - 1.0)
}

#[test]
fn equal_inputs_give_zero() {
    for alpha in [0.5, 1.0, 1.5] {
        let c = le5_check(0.7, 0.7, alpha, 0.5).unwrap();
        assert_eq!(c.lhs, 0.0);
    }
    assert_eq!(le52_check(&[1.0, 2.0], &[1.0, 2.0], 0.5).unwrap().lhs, 0.0);
    let c = abs_power_check(&[1.0, -2.0], &[1.0, -2.0], 0.3).unwrap();
    assert_eq!(c.lhs, 0.0);
    assert_eq!(c.margin, Some(0.0));
}

#[test]
fn cos_sin_cosine_part_is_the_radial_constant() {
    let p = cos_sin_parts(1.0, 0.0, 0.5).unwrap();
    let k = radial_constant(0.5).unwrap();
    assert!((p.cos_part - k).abs() < 1e-9 * k, "{} vs {k}", p.cos_part);
    let p = cos_sin_parts(1.0, 0.0, 1.5).unwrap();
    // both parts equal K_{1.5} = Γ(−1/2) cos(3π/4) / 1.5
    let k15 = 2.0 * std::f64::consts::PI.sqrt() * std::f64::consts::FRAC_1_SQRT_2 / 1.5;
    assert!((p.cos_part - k15).abs() < 1e-9 * k15);
    assert!((p.sin_part - k15).abs() < 1e-9 * k15);
}

#[test]
fn cos_sin_sine_part_matches_period_sum() {
    // a = 1, b = −1: the cosine part vanishes and the sine part is 2∫|sin r| r^{−1−α}
    let alpha = 0.5;
    let p = cos_sin_parts(1.0, -1.0, alpha).unwrap();
    assert_eq!(p.cos_part, 0.0);
    let want = 2.0 * abs_sin_oracle(1.0 + alpha);
    assert!((p.sin_part - want).abs() < 1e-7 * want, "{} vs {want}", p.sin_part);
}

#[test]
fn cos_sin_homogeneity() {
    for alpha in [0.5, 1.0, 1.5] {
        for (a, b) in [(1.0, 0.3), (1.0, -0.7), (2.0, -3.0)] {
            let base = le5_check(a, b, alpha, 0.5).unwrap().lhs;
            for lam in [2.0, 10.0] {
                let scaled = le5_check(lam * a, lam * b, alpha, 0.5).unwrap().lhs;
                assert!((scaled / (lam.powf(alpha) * base) - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn cos_sin_tail_is_internally_consistent() {
    for alpha in [0.5, 1.0, 1.5] {
        for (a, b) in [(1.0, 0.0), (1.0, 0.3), (1.0, -0.7)] {
            let p = cos_sin_parts(a, b, alpha).unwrap();
            let far = cos_sin_parts_at(a, b, alpha, 80.0).unwrap();
            let lhs = p.cos_part + p.sin_part;
            assert!((far.cos_part + far.sin_part - lhs).abs() < 1e-8 * lhs + p.error + far.error);
            let truncated = cos_sin_truncated(a, b, alpha).unwrap();
            assert!((truncated - lhs).abs() <= p.tail_bound);
        }
    }
}

#[test]
fn cos_sin_regimes_need_valid_parameters() {
    assert!(le5_check(1.0, 0.0, 2.0, 0.5).is_err());
    assert!(le5_check(1.0, 0.0, 1.0, 1.0).is_err());
    let c = le5_check(1.0, 0.0, 1.0, 0.5).unwrap();
    assert_eq!(c.inputs.len(), 4);
}

#[test]
fn signed_power_examples() {
    let c = le52_check(&[1.0], &[-1.0], 0.5).unwrap();
    assert!((c.lhs - 2.0).abs() < 1e-15);
    assert!((c.ratio() - 2f64.sqrt()).abs() < 1e-15);
    assert!(le52_check(&[1.0], &[0.0], 1.0).is_err());
}

#[test]
fn abs_power_triangle_case() {
    let c = abs_power_check(&[3.0, 4.0], &[0.0, 1.0], 1.0).unwrap();
    assert!((c.lhs - (5.0 - 1.0)).abs() < 1e-15);
    assert!(!is_violation(&c));
}

#[test]
fn abs_power_sweep_has_no_violations() {
    for q in [0.1, 0.5, 0.9, 1.0] {
        let s = abs_power_sweep(q, 3, 100_000, 21).unwrap();
        assert_eq!(s.violations, 0, "q={q}");
        assert!(s.worst_ratio <= 1.0 + 1e-12);
    }
}

#[test]
fn signed_power_search_is_stable_and_witnessed() {
    let q = 0.5;
    let sampler = |i: usize| if i == 0 { (vec![1.0], vec![-1.0]) } else { pair_sample(5, 1, i) };
    let ratio = |p: &(Vec<f64>, Vec<f64>)| -> stablelike::Result<(f64, Vec<f64>)> {
        let c = le52_check(&p.0, &p.1, q)?;
        Ok((c.ratio(), c.inputs))
    };
    let s = sup_ratio_search(sampler, ratio, 1000, 64_000).unwrap();
    assert!(s.stable);
    assert!(s.constant >= 2f64.sqrt() - 1e-15);
    assert!(s.history.windows(2).all(|w| w[1].1 >= w[0].1));
}

#[test]
fn abs_power_search_finds_constant_one() {
    let q = 0.4;
    let sampler = |i: usize| {
        let (x, y) = pair_sample(9, 2, i);
        if i % 16 == 0 {
            (x, vec![0.0, 0.0])
        } else {
            (x, y)
        }
    };
    let ratio = |p: &(Vec<f64>, Vec<f64>)| -> stablelike::Result<(f64, Vec<f64>)> {
        let c = abs_power_check(&p.0, &p.1, q)?;
        Ok((c.ratio(), c.inputs))
    };
    let s = sup_ratio_search(sampler, ratio, 1000, 16_000).unwrap();
    assert_eq!(s.constant, 1.0);
    assert!(s.stable);
}

#[test]
fn cos_sin_search_is_stable() {
    let alpha = 0.5;
    let sampler = |i: usize| cos_sin_pair_sample(17, i);
    let ratio = |p: &(f64, f64)| -> stablelike::Result<(f64, Vec<f64>)> {
        let c = le5_check(p.0, p.1, alpha, 0.5)?;
        Ok((c.ratio(), c.inputs))
    };
    let s = sup_ratio_search(sampler, ratio, 32, 128).unwrap();
    assert!(s.stable, "{:?}", s.history);
    // golden value from the oracle run with seed 17
    assert!((s.constant - GOLDEN_COS_SIN_HALF).abs() < 1e-6 * GOLDEN_COS_SIN_HALF, "{}", s.constant);
}

const GOLDEN_COS_SIN_HALF: f64 = 6.050860936370118;

proptest! {
    #[test]
    fn signed_power_is_homogeneous(x in prop::collection::vec(-10.0f64..10.0, 3), y in prop::collection::vec(-10.0f64..10.0, 3),
                           lam in 0.01f64..100.0, q in 0.05f64..0.95) {
        let a = le52_check(&x, &y, q).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| lam * v).collect();
        let ys: Vec<f64> = y.iter().map(|v| lam * v).collect();
        let b = le52_check(&xs, &ys, q).unwrap();
        prop_assert!((a.ratio() - b.ratio()).abs() <= 1e-10 * a.ratio().max(1e-300));
    }

    #[test]
    fn abs_power_holds(x in prop::collection::vec(-1e3f64..1e3, 2), y in prop::collection::vec(-1e3f64..1e3, 2), q in 0.01f64..1.0) {
        let c = abs_power_check(&x, &y, q).unwrap();
        prop_assert!(!is_violation(&c));
    }
}
