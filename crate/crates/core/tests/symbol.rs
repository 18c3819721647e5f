use num_complex::Complex64;
use proptest::prelude::*;
use stablelike::linalg::{self, from_rows, identity};
use stablelike::measures::*;
use stablelike::symbol::*;

/// Γ(x) through statrs, shifted up for negative non-integer arguments.
fn gamma(x: f64) -> f64 {
    if x > 0.0 {
        statrs::function::gamma::gamma(x)
    } else {
        gamma(x + 1.0) / x
    }
}

/// K_α from the Gamma function, independent of the quadrature path.
fn k_closed(alpha: f64) -> f64 {
    if alpha == 1.0 {
        std::f64::consts::FRAC_PI_2
    } else {
        gamma(1.0 - alpha) * (std::f64::consts::PI * alpha / 2.0).cos() / alpha
    }
}

const K_HALF: f64 = 2.506_628_274_631_000_5; // √(2π)

#[test]
fn radial_constant_matches_gamma_closed_form() {
    for i in 1..=19 {
        let a = 0.1 * i as f64;
        let k = radial_constant(a).unwrap();
        assert!((k - k_closed(a)).abs() < 1e-10 * k.max(1.0), "alpha {a}: {k} vs {}", k_closed(a));
    }
    assert!((radial_constant(1.0).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    assert!((radial_constant(0.5).unwrap() - K_HALF).abs() < 1e-10);
}

#[test]
fn radial_constant_sweep_bounded() {
    let vals: Vec<f64> = (0..=90)
        .map(|i| {
            let a = 0.1 + 0.02 * i as f64;
            radial_constant(a).unwrap() * a * (2.0 - a)
        })
        .collect();
    assert!(vals.iter().all(|v| *v > 0.5 && *v < 2.5), "{vals:?}");
}

#[test]
fn radial_constant_rejects_range() {
    assert!(radial_constant(0.0).is_err());
    assert!(radial_constant(2.0).is_err());
}

#[test]
fn radial_integral_imaginary_closed_forms() {
    for &alpha in &[0.3, 0.7, 1.3, 1.8] {
        let comp = Compensation::for_alpha(alpha);
        for &a in &[0.01, 0.7, 3.0, -25.0, 400.0] {
            let (v, e) = radial_integral(a, alpha, comp).unwrap();
            let re = k_closed(alpha) * f64::abs(a).powf(alpha);
            let im = a.signum() * f64::abs(a).powf(alpha) * gamma(-alpha) * (std::f64::consts::PI * alpha / 2.0).sin();
            let scale = f64::abs(a).powf(alpha);
            assert!((v.re - re).abs() < 1e-9 * scale, "re alpha {alpha} a {a}: {} vs {re}", v.re);
            assert!((v.im - im).abs() < 1e-9 * scale, "im alpha {alpha} a {a}: {} vs {im}", v.im);
            assert!(e < 1e-8 * scale.max(1.0));
        }
    }
}

#[test]
fn radial_integral_alpha_one_truncated() {
    // ∫ (a r 1_{r≤1} − sin a r) r^{-2} dr = a (ln a + γ − 1) for a > 0
    let euler = 0.577_215_664_901_532_9;
    for &a in &[0.05, 1.0, 7.0, 300.0] {
        let (v, _) = radial_integral(a, 1.0, Compensation::Truncated).unwrap();
        let im = a * (f64::ln(a) + euler - 1.0);
        assert!((v.im - im).abs() < 1e-9 * a.max(1.0), "a {a}: {} vs {im}", v.im);
        assert!((v.re - std::f64::consts::FRAC_PI_2 * a).abs() < 1e-9 * a.max(1.0));
    }
}

#[test]
fn radial_integral_rejects_divergent_conventions() {
    assert!(radial_integral(1.0, 0.5, Compensation::Full).is_err());
    assert!(radial_integral(1.0, 1.5, Compensation::None).is_err());
}

fn sym_pair_1d(alpha: f64) -> StableMeasure {
    StableMeasure::new(alpha, SphericalMeasure::atoms(1, vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]).unwrap()).unwrap()
}

#[test]
fn stable_symbol_one_dimensional_example() {
    let m = sym_pair_1d(0.5);
    let s = stable_symbol(&m, &identity(1), &[2.0]).unwrap();
    assert_eq!(s.method, Method::ClosedForm);
    assert!((s.value.re - 2.0 * K_HALF * 2f64.sqrt()).abs() < 1e-9);
    assert_eq!(s.value.im, 0.0);
}

#[test]
fn stable_symbol_zero_frequency() {
    let m = StableMeasure::new(1.4, SphericalMeasure::axes(2, 1.0)).unwrap();
    let s = stable_symbol(&m, &identity(2), &[0.0, 0.0]).unwrap();
    assert_eq!(s.value, Complex64::new(0.0, 0.0));
}

#[test]
fn isotropic_constant_matches_fractional_laplacian_normalisation() {
    // ∫(1 − cos y₁)|y|^{−d−α}dy = π^{d/2} |Γ(−α/2)| / (2^α Γ((d+α)/2))
    for d in 1..=3 {
        for &alpha in &[0.4, 1.0, 1.5] {
            let c = isotropic_constant(d, alpha).unwrap();
            let pi = std::f64::consts::PI;
            let oracle = pi.powf(d as f64 / 2.0) * gamma(-alpha / 2.0).abs()
                / (2f64.powf(alpha) * gamma((d as f64 + alpha) / 2.0));
            assert!((c - oracle).abs() < 1e-9 * oracle, "d {d} alpha {alpha}: {c} vs {oracle}");
            let m = StableMeasure::new(alpha, SphericalMeasure::isotropic(d, sphere_area(d)).unwrap()).unwrap();
            let mut xi = vec![0.0; d];
            xi[0] = 1.7;
            let s = stable_symbol(&m, &identity(d), &xi).unwrap();
            assert!((s.value.re - oracle * 1.7f64.powf(alpha)).abs() < 1e-9 * s.value.re);
        }
    }
}

#[test]
fn general_matches_closed_form_isotropic_and_atoms() {
    let cases = vec![
        StableMeasure::new(1.5, SphericalMeasure::isotropic(2, 2.0).unwrap()).unwrap(),
        StableMeasure::new(0.6, SphericalMeasure::isotropic(3, 1.0).unwrap()).unwrap(),
        StableMeasure::new(1.0, SphericalMeasure::axes(2, 0.8)).unwrap(),
        StableMeasure::new(1.2, SphericalMeasure::axes(2, 1.0)).unwrap(),
    ];
    let sigma = from_rows(&[vec![1.0, 0.3], vec![-0.2, 0.9]]);
    for m in cases {
        let d = m.dim();
        let s = linalg::Mat::from_fn(d, d, |i, j| if i < 2 && j < 2 { sigma[(i, j)] } else if i == j { 1.0 } else { 0.0 });
        let xi: Vec<f64> = (0..d).map(|i| 0.7 - 1.1 * i as f64).collect();
        let a = stable_symbol(&m, &s, &xi).unwrap();
        let b = general_symbol(&m, &s, &xi, m.alpha).unwrap();
        assert!((a.value - b.value).norm() < 1e-8 * a.value.norm().max(1.0), "{:?} vs {:?}", a.value, b.value);
        assert!(b.value.im.abs() <= b.est_error.max(1e-12), "imaginary part {}", b.value.im);
    }
}

#[test]
fn asymmetric_measure_falls_back_to_quadrature() {
    let m = StableMeasure::new(1.3, SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0), (vec![0.0, 1.0], 0.5)]).unwrap()).unwrap();
    let s = stable_symbol(&m, &identity(2), &[1.0, -2.0]).unwrap();
    assert_eq!(s.method, Method::Quadrature);
    assert!(s.value.im.abs() > 0.1);
    let neg = stable_symbol(&m, &identity(2), &[-1.0, 2.0]).unwrap();
    assert!((neg.value - s.value.conj()).norm() < 1e-10);
}

#[test]
fn lower_bound_examples() {
    let iso = StableMeasure::new(1.3, SphericalMeasure::isotropic(2, 1.0).unwrap()).unwrap();
    let model = LevyModel::constant(iso.clone(), identity(2));
    let xis = vec![vec![1.0, 0.0], vec![0.3, -2.0], vec![5.0, 5.0]];
    let r = lower_bound_check(&iso, &model, &identity(2), &xis, &[]).unwrap();
    for row in &r.rows {
        assert!(row.margin.abs() < 1e-8 * row.re_psi.max(1.0), "{row:?}");
    }
    let axes = StableMeasure::new(1.0, SphericalMeasure::axes(2, 1.0)).unwrap();
    let model = LevyModel::constant(axes.clone(), identity(2));
    let r = lower_bound_check(&axes, &model, &linalg::diag(&[2.0, 1.0]), &[vec![1.0, 0.0]], &[]).unwrap();
    assert!(r.min_margin >= 0.0);
    let deg = StableMeasure::new(0.8, SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 1.0)]).unwrap()).unwrap();
    let model = LevyModel::constant(deg.clone(), identity(2));
    let r = lower_bound_check(&deg, &model, &identity(2), &[vec![0.0, 1.0]], &[]).unwrap();
    assert_eq!(r.rows[0].bound, 0.0);
    assert!(r.min_margin >= 0.0);
}

#[test]
fn continuity_examples() {
    let nu = StableMeasure::new(0.8, SphericalMeasure::axes(2, 1.0)).unwrap();
    let xis = vec![vec![1.0, 2.0], vec![-0.5, 0.1]];
    let same = symbol_continuity_check(&nu, &nu, &identity(2), &identity(2), &xis, 0.5).unwrap();
    assert!(same.ratios.iter().all(|r| *r == 0.0));
    let double = nu.scaled(2.0);
    let r = symbol_continuity_check(&nu, &double, &identity(2), &identity(2), &xis, 0.5).unwrap();
    assert!((r.k_difference - 1.0).abs() < 1e-15);
    for (xi, ratio) in xis.iter().zip(&r.ratios) {
        let n = linalg::norm(xi);
        let u: Vec<f64> = xi.iter().map(|v| v / n).collect();
        let exact = radial_constant(0.8).unwrap() * nu.spherical.abs_power_integral(&u, 0.8);
        assert!((ratio - exact).abs() < 1e-12 * exact);
    }
}

#[test]
fn continuity_exponent_below_one() {
    // only ±e₁ atoms and a shear σ whose image of e₁ is orthogonal to ξ
    let nu = StableMeasure::new(0.5, SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 1.0)]).unwrap()).unwrap();
    let sigma = from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
    let fit = sigma_perturbation_exponent(&nu, &sigma, &[vec![1.0, -1.0]], 3..=10).unwrap();
    assert!((fit.exponent - 0.5).abs() < 0.05, "{}", fit.exponent);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn homogeneity(alpha in 0.1..1.95f64, x in -3.0..3.0f64, y in -3.0..3.0f64, lam in 0.1..10.0f64) {
        prop_assume!(x.abs() + y.abs() > 1e-3);
        let m = StableMeasure::new(alpha, SphericalMeasure::axes(2, 0.7)).unwrap();
        let s = from_rows(&[vec![1.2, 0.1], vec![0.0, 0.8]]);
        let a = stable_symbol(&m, &s, &[x, y]).unwrap().value;
        let b = stable_symbol(&m, &s, &[lam * x, lam * y]).unwrap().value;
        prop_assert!((b - a * lam.powf(alpha)).norm() <= 1e-8 * b.norm());
    }

    #[test]
    fn general_homogeneity_and_conjugation(alpha in prop_oneof![0.2..0.95f64, 1.05..1.9f64], x in -3.0..3.0f64, y in -3.0..3.0f64) {
        prop_assume!(x.abs() + y.abs() > 1e-2);
        let m = StableMeasure::new(alpha, SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0), (vec![0.6, 0.8], 0.4)]).unwrap()).unwrap();
        let s = identity(2);
        let a = general_symbol(&m, &s, &[x, y], alpha).unwrap();
        let b = general_symbol(&m, &s, &[2.0 * x, 2.0 * y], alpha).unwrap();
        let c = general_symbol(&m, &s, &[-x, -y], alpha).unwrap();
        prop_assert!(a.value.re >= 0.0);
        prop_assert!((b.value - a.value * 2f64.powf(alpha)).norm() <= 1e-8 * b.value.norm());
        prop_assert!((c.value - a.value.conj()).norm() <= 1e-10 * a.value.norm().max(1.0));
    }
}
