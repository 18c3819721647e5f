use stablelike::generator::TestFunction;
use stablelike::linalg;
use stablelike::measures::{LevyModel, SphericalMeasure, StableMeasure};
use stablelike::sampler::{sample_driver, uniform_grid, DriverSpec, PathEnsemble};
use stablelike::verify::{
    box_integral, dilate, krylov_ratio_sweep, lp_norm, martingale_residual, occupation_estimate, perturbed_model,
    Conditioning, KrylovHypothesis,
};

fn iso1(alpha: f64) -> StableMeasure {
    StableMeasure::new(alpha, SphericalMeasure::isotropic(1, 1.0).unwrap()).unwrap()
}

fn driver_1d(alpha: f64, n: usize, steps: usize, seed: u64) -> (PathEnsemble, LevyModel) {
    let m = iso1(alpha);
    let spec = DriverSpec::new(m.clone(), linalg::identity(1));
    let ens = sample_driver(&spec, &uniform_grid(1.0, steps), n, seed).unwrap();
    (ens, LevyModel::constant(m, linalg::identity(1)))
}

#[test]
fn constant_phi_has_zero_residual() {
    let (ens, model) = driver_1d(1.5, 2000, 10, 1);
    let r = martingale_residual(&ens, &model, &TestFunction::constant(1, 3.0), 0.0, 1.0, &Conditioning::One).unwrap();
    assert_eq!(r.residual, 0.0);
}

#[test]
fn null_case_and_negative_control() {
    let (ens, model) = driver_1d(1.5, 30_000, 20, 7);
    let wrong = perturbed_model(&model, 2.0);
    for c in [0.0, 1.0, -2.0] {
        let phi = TestFunction::gaussian(vec![c], 1.0, 1.0);
        let r = martingale_residual(&ens, &model, &phi, 0.0, 1.0, &Conditioning::One).unwrap();
        assert!(r.stderr > 0.0);
        assert!(r.z_score() <= 4.0, "center {c}: {r:?}");
        assert!(r.consistent);
        let w = martingale_residual(&ens, &wrong, &phi, 0.0, 1.0, &Conditioning::One).unwrap();
        assert!(w.z_score() > 6.0, "center {c}: {w:?}");
    }
}

#[test]
fn perturbation_of_half_still_detected() {
    let (ens, model) = driver_1d(1.5, 30_000, 20, 8);
    let phi = TestFunction::gaussian(vec![0.0], 1.0, 1.0);
    let w = martingale_residual(&ens, &perturbed_model(&model, 1.5), &phi, 0.0, 1.0, &Conditioning::One).unwrap();
    assert!(w.z_score() > 6.0, "{w:?}");
}

#[test]
fn conditioned_residual_is_consistent() {
    let (ens, model) = driver_1d(1.2, 30_000, 20, 9);
    let phi = TestFunction::gaussian(vec![0.5], 0.8, 1.0);
    let g = Conditioning::Product {
        factors: vec![
            Conditioning::Gaussian { time: 0.25, center: vec![0.0], width: 1.0 },
            Conditioning::Cosine { time: 0.5, xi: vec![0.7] },
        ],
    };
    let r = martingale_residual(&ens, &model, &phi, 0.5, 1.0, &g).unwrap();
    assert!(r.z_score() <= 4.0, "{r:?}");
    let late = Conditioning::Gaussian { time: 0.75, center: vec![0.0], width: 1.0 };
    assert!(martingale_residual(&ens, &model, &phi, 0.5, 1.0, &late).is_err());
}

#[test]
fn tower_consistency() {
    let (ens, model) = driver_1d(1.5, 5000, 20, 3);
    let phi = TestFunction::gaussian(vec![0.0], 1.0, 1.0);
    let g = Conditioning::One;
    let a = martingale_residual(&ens, &model, &phi, 0.0, 0.5, &g).unwrap();
    let b = martingale_residual(&ens, &model, &phi, 0.5, 1.0, &g).unwrap();
    let c = martingale_residual(&ens, &model, &phi, 0.0, 1.0, &g).unwrap();
    let budget = a.generator_error_budget + b.generator_error_budget + c.generator_error_budget;
    assert!((a.residual + b.residual - c.residual).abs() <= 1e-12 + budget, "{a:?} {b:?} {c:?}");
    assert!((a.residual + b.residual - c.residual).abs() <= (a.stderr + b.stderr + c.stderr));
}

#[test]
fn residual_is_linear_in_phi() {
    let (ens, model) = driver_1d(1.5, 5000, 10, 4);
    let p1 = TestFunction::gaussian(vec![0.0], 1.0, 1.0);
    let p2 = TestFunction::gaussian(vec![1.0], 0.7, 1.0);
    let combo = TestFunction::linear_combination(vec![(2.0, p1.clone()), (-1.0, p2.clone())]);
    let g = Conditioning::One;
    let r1 = martingale_residual(&ens, &model, &p1, 0.0, 1.0, &g).unwrap();
    let r2 = martingale_residual(&ens, &model, &p2, 0.0, 1.0, &g).unwrap();
    let rc = martingale_residual(&ens, &model, &combo, 0.0, 1.0, &g).unwrap();
    let budget = 2.0 * r1.generator_error_budget + r2.generator_error_budget + rc.generator_error_budget + 1e-10;
    assert!((2.0 * r1.residual - r2.residual - rc.residual).abs() <= budget);
}

#[test]
fn occupation_trivial_cases() {
    let (ens, _) = driver_1d(1.5, 1000, 16, 5);
    let one = |_t: f64, _x: &[f64]| 1.0;
    let o = occupation_estimate(&ens, &one, 0.25, 0.875, 100).unwrap();
    assert!((o.value - 0.625).abs() < 1e-14);
    let ind = |_t: f64, x: &[f64]| if x[0].abs() <= 1e300 { 1.0 } else { 0.0 };
    let o = occupation_estimate(&ens, &ind, 0.0, 1.0, 100).unwrap();
    assert!((o.value - 1.0).abs() < 1e-14);
}

#[test]
fn occupation_orders_with_distance() {
    let (ens, _) = driver_1d(1.5, 20_000, 40, 6);
    let near = TestFunction::gaussian(vec![0.0], 0.5, 1.0);
    let far = TestFunction::gaussian(vec![5.0], 0.5, 1.0);
    let a = occupation_estimate(&ens, &|_, x| near.value(x), 0.0, 1.0, 200).unwrap();
    let b = occupation_estimate(&ens, &|_, x| far.value(x), 0.0, 1.0, 200).unwrap();
    assert!(a.value - b.value > 4.0 * (a.stderr + b.stderr), "{a:?} {b:?}");
}

#[test]
fn lp_norm_matches_gaussian_closed_form() {
    for (d, w, p) in [(1usize, 0.7, 8.0), (2, 1.3, 4.0), (1, 2.0, 2.0)] {
        let f = TestFunction::gaussian(vec![0.3; d], w, 1.5);
        // ∫ (a e^{−r²/2w²})^p = a^p (2π w²/p)^{d/2}
        let want = (1.5f64.powf(p) * (2.0 * std::f64::consts::PI * w * w / p).powf(d as f64 / 2.0)).powf(1.0 / p);
        let got = lp_norm(&f, p).unwrap();
        assert!((got / want - 1.0).abs() < 1e-8, "d={d}: {got} vs {want}");
        let dl = lp_norm(&dilate(&f, 4.0), p).unwrap();
        assert!((dl / (want * 4f64.powf(-(d as f64) / p)) - 1.0).abs() < 1e-8);
    }
    let unit = box_integral(&|x: &[f64]| x[0] * x[1], &[0.0, 0.0], &[1.0, 2.0], 1e-12).unwrap();
    assert!((unit - 1.0).abs() < 1e-12);
}

#[test]
fn krylov_threshold_and_band() {
    let h = KrylovHypothesis::constant_coefficients(1, 1.5);
    assert!((h.p_threshold() - (1.0 / 1.5 + 1.0)).abs() < 1e-15);
    let h2 = KrylovHypothesis { alpha_bar: Some(0.2), ..KrylovHypothesis::constant_coefficients(2, 0.5) };
    assert!((h2.p_threshold() - 10.0).abs() < 1e-12);
    let (lo, hi) = h.exponent_band(8.0);
    assert!((lo - 0.0).abs() < 1e-15);
    assert!((hi - (1.0 - 1.0 / 12.0 - 0.125)).abs() < 1e-15);
}

#[test]
fn krylov_zero_function_gives_zero_ratios() {
    let (ens, _) = driver_1d(1.5, 500, 8, 2);
    let zero = TestFunction::constant(1, 0.0);
    let h = KrylovHypothesis::constant_coefficients(1, 1.5);
    let r = krylov_ratio_sweep(&ens, &zero, 8.0, &[1.0, 2.0], &[(0.0, 1.0)], &h).unwrap();
    assert!(r.ratios.iter().all(|v| *v == 0.0));
}

#[test]
fn krylov_ratios_bounded_and_exponent_in_band() {
    let (ens, _) = driver_1d(1.5, 20_000, 64, 12);
    let f = TestFunction::gaussian(vec![0.0], 2.0, 1.0);
    let h = KrylovHypothesis::constant_coefficients(1, 1.5);
    let windows = [(0.0, 1.0), (0.0, 0.5), (0.0, 0.25), (0.0, 0.125)];
    let r = krylov_ratio_sweep(&ens, &f, 8.0, &[1.0, 2.0, 4.0, 8.0], &windows, &h).unwrap();
    assert!(r.in_theory);
    assert!(r.max_min_ratio <= 3.0, "{:?}", r.ratios);
    assert!(r.mann_kendall_p > 0.05);
    let beta_max = 1.5 * (1.0 - 1.0 / 8.0) - 0.01;
    let lower = 1.0 - beta_max / 1.5 - 1.0 / 8.0 - 0.1;
    assert!(r.window_exponent >= lower && r.window_exponent <= 1.0, "{}", r.window_exponent);
}

#[test]
fn krylov_invariant_under_relabeling() {
    let (ens, _) = driver_1d(1.5, 3000, 16, 13);
    let mut rev = ens.clone();
    let n = ens.n_paths();
    let per = ens.n_times() * ens.dim;
    for p in 0..n {
        rev.states[p * per..(p + 1) * per].copy_from_slice(ens.path(n - 1 - p));
    }
    rev.jumps.reverse();
    let f = TestFunction::bump(vec![0.0], 1.0, 1.0);
    let h = KrylovHypothesis::constant_coefficients(1, 1.5);
    let a = krylov_ratio_sweep(&ens, &f, 4.0, &[1.0, 2.0], &[(0.0, 1.0), (0.0, 0.5)], &h).unwrap();
    let b = krylov_ratio_sweep(&rev, &f, 4.0, &[1.0, 2.0], &[(0.0, 1.0), (0.0, 0.5)], &h).unwrap();
    for (x, y) in a.ratios.iter().zip(&b.ratios) {
        assert!((x - y).abs() <= 1e-12 * x.abs());
    }
    assert!((a.window_exponent - b.window_exponent).abs() < 1e-10);
}
