use std::sync::Arc;

use num_complex::Complex64;
use stablelike::linalg::{self, Mat};
use stablelike::measures::{MatrixField, SphericalMeasure, StableMeasure};
use stablelike::sampler::{sample_driver, uniform_grid, DriverSpec, Scheme};
use stablelike::sde::{
    coupled_uniqueness_experiment, discrete_maximal_diagnostic, euler_solve, euler_solve_strided, euler_solve_two_driver,
    CoefficientField, CouplingConfig, Regularity,
};
use stablelike::stats::{mean, stderr};
use stablelike::symbol::stable_symbol;
use stablelike::CoreError;

fn cylindrical(alpha: f64) -> StableMeasure {
    StableMeasure::new(alpha, SphericalMeasure::axes(2, 0.5)).unwrap()
}

fn mat(rows: &[&[f64]]) -> Mat {
    linalg::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>())
}

fn diag_sin(amp: f64) -> CoefficientField {
    CoefficientField::new(
        MatrixField::DiagSin { diag: vec![1.0, 1.0], amplitude: amp, axis: 0 },
        Regularity::Lipschitz { constant: amp },
        1.0 + amp,
        1.0 - amp,
    )
}

fn holder(gamma: f64) -> CoefficientField {
    CoefficientField::new(
        MatrixField::HolderRadial { dim: 1, gamma },
        Regularity::Hoelder { gamma, constant: 1.0 },
        2.0,
        1.0,
    )
}

#[test]
fn identity_coefficient_reproduces_driver() {
    let spec = DriverSpec::new(cylindrical(1.2), linalg::identity(2)).with_scheme(Scheme::Truncated { delta: Some(0.05) });
    let l = sample_driver(&spec, &uniform_grid(1.0, 20), 200, 3).unwrap();
    let x = euler_solve(&CoefficientField::constant(&linalg::identity(2)), &l, &[0.0, 0.0]).unwrap();
    assert_eq!(x.states, l.states);
    let x0 = [0.5, -1.25];
    let x = euler_solve(&CoefficientField::constant(&linalg::identity(2)), &l, &x0).unwrap();
    for p in 0..200 {
        for k in 0..21 {
            let want = [x0[0] + l.state(p, k)[0], x0[1] + l.state(p, k)[1]];
            assert_eq!(x.state(p, k), &want);
        }
    }
}

#[test]
fn constant_coefficient_is_linear_map() {
    let a = mat(&[&[1.0, 0.5], &[-0.3, 2.0]]);
    let l = sample_driver(&DriverSpec::new(cylindrical(1.5), linalg::identity(2)), &uniform_grid(1.0, 10), 100, 4).unwrap();
    let x0 = [1.0, 2.0];
    let x = euler_solve(&CoefficientField::constant(&a), &l, &x0).unwrap();
    for p in 0..100 {
        for k in 0..11 {
            let al = linalg::mat_vec(&a, l.state(p, k));
            let want = [x0[0] + al[0], x0[1] + al[1]];
            assert_eq!(x.state(p, k), &want);
        }
    }
}

#[test]
fn start_state_and_divergence() {
    let l = sample_driver(&DriverSpec::new(cylindrical(1.5), linalg::identity(2)), &uniform_grid(1.0, 10), 20, 4).unwrap();
    let x = euler_solve(&diag_sin(0.25), &l, &[0.3, 0.4]).unwrap();
    for p in 0..20 {
        assert_eq!(x.state(p, 0), &[0.3, 0.4]);
    }
    let blow = CoefficientField::new(
        MatrixField::Custom { f: Arc::new(|_, x: &[f64]| linalg::identity(2) * (1e200 * (1.0 + x[0].abs()))), dim: 2 },
        Regularity::Lipschitz { constant: f64::INFINITY },
        f64::INFINITY,
        0.0,
    );
    let err = euler_solve(&blow, &l, &[1.0, 1.0]).unwrap_err();
    assert!(matches!(err, CoreError::Divergence { .. }), "{err:?}");
}

#[test]
fn weak_step_refinement() {
    let field = diag_sin(0.25);
    let phi = |x: &[f64]| (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp();
    let n = 20_000;
    let mut est = Vec::new();
    for (i, steps) in [50usize, 100, 200].iter().enumerate() {
        let l = sample_driver(&DriverSpec::new(cylindrical(1.3), linalg::identity(2)), &uniform_grid(1.0, *steps), n, 40 + i as u64).unwrap();
        let x = euler_solve(&field, &l, &[0.2, -0.1]).unwrap();
        let v: Vec<f64> = (0..n).map(|p| phi(x.state(p, *steps))).collect();
        est.push((mean(&v), stderr(&v)));
    }
    for w in est.windows(2) {
        let tol = 3.0 * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt();
        assert!((w[0].0 - w[1].0).abs() < tol, "{est:?}");
    }
}

#[test]
fn bounds_are_checked() {
    let f = diag_sin(0.25);
    let b = f.check_bounds(10_000, 10.0, 1).unwrap();
    assert!(b.sup_margin >= 0.0 && b.nondegeneracy_margin >= 0.0);
    let mut bad = diag_sin(0.25);
    bad.min_singular = 0.9;
    assert!(matches!(bad.check_bounds(10_000, 10.0, 1), Err(CoreError::InvalidConfiguration(_))));
    let moll = CoefficientField::new(MatrixField::Mollified { dim: 1, gamma: 0.5, eps: 0.05 }, Regularity::SobolevSample { p: 2.0, eps: 0.05 }, 2.0, 1.0);
    assert!(moll.w1p_norm(2.0, 2.0, 400).unwrap().is_finite());
}

fn two_drivers(n: usize, steps: usize) -> (stablelike::sampler::PathEnsemble, stablelike::sampler::PathEnsemble, StableMeasure, StableMeasure) {
    let nu = cylindrical(1.5);
    let nu_bar = StableMeasure::new(0.7, SphericalMeasure::isotropic(2, 1.0).unwrap()).unwrap();
    let grid = uniform_grid(1.0, steps);
    let l = sample_driver(&DriverSpec::new(nu.clone(), linalg::identity(2)), &grid, n, 5).unwrap();
    let spec_bar = DriverSpec::new(nu_bar.clone(), linalg::identity(2)).with_channel(stablelike::rng::channel::DRIVER_SECOND);
    let lb = sample_driver(&spec_bar, &grid, n, 5).unwrap();
    (l, lb, nu, nu_bar)
}

#[test]
fn two_driver_reductions() {
    let (l, lb, _, _) = two_drivers(100, 10);
    let x0 = [0.1, 0.2];
    let zero = CoefficientField::constant(&Mat::zeros(2, 2));
    let one = euler_solve(&diag_sin(0.25), &l, &x0).unwrap();
    let two = euler_solve_two_driver(&diag_sin(0.25), &zero, &l, &lb, &x0).unwrap();
    assert_eq!(one.states, two.states);
    let id = CoefficientField::constant(&linalg::identity(2));
    let only_bar = euler_solve_two_driver(&zero, &id, &l, &lb, &x0).unwrap();
    for p in 0..100 {
        for k in 0..11 {
            let want = [x0[0] + lb.state(p, k)[0], x0[1] + lb.state(p, k)[1]];
            assert_eq!(only_bar.state(p, k), &want);
        }
    }
    let err = euler_solve_two_driver(&id, &id, &l, &l, &x0).unwrap_err();
    assert!(matches!(err, CoreError::InvalidConfiguration(_)));
}

#[test]
fn two_driver_cf() {
    let n = 60_000;
    let (l, lb, nu, nu_bar) = two_drivers(n, 2);
    let s = mat(&[&[1.0, 0.2], &[0.0, 0.8]]);
    let sb = mat(&[&[0.5, 0.0], &[0.3, 0.5]]);
    let x = euler_solve_two_driver(&CoefficientField::constant(&s), &CoefficientField::constant(&sb), &l, &lb, &[0.0, 0.0]).unwrap();
    for xi in [[1.0, 0.0], [0.5, -1.0]] {
        let psi = stable_symbol(&nu, &s, &xi).unwrap().value + stable_symbol(&nu_bar, &sb, &xi).unwrap().value;
        let want = (-psi).exp();
        let mut got = Complex64::new(0.0, 0.0);
        for p in 0..n {
            got += Complex64::from_polar(1.0, linalg::dot(&xi, x.state(p, 2)));
        }
        got /= n as f64;
        assert!((got - want).norm() < 4.0 / (n as f64).sqrt(), "{xi:?}: {got} vs {want}");
    }
}

fn coupling_cfg(step_x: f64, step_y: f64, x0: Vec<f64>, y0: Vec<f64>, q: f64, n: usize) -> CouplingConfig {
    CouplingConfig {
        horizon: 1.0,
        step_x,
        step_y,
        x0,
        y0,
        q,
        n_paths: n,
        seed: 17,
        maximal_levels: 6,
        ell_paths: 50,
        bootstrap_resamples: 200,
    }
}

#[test]
fn identical_coupling_is_exactly_zero() {
    let spec = DriverSpec::new(cylindrical(1.5), linalg::identity(2));
    let cfg = coupling_cfg(1.0 / 32.0, 1.0 / 32.0, vec![0.2, 0.1], vec![0.2, 0.1], 1.7, 500);
    let r = coupled_uniqueness_experiment(&diag_sin(0.25), &spec, &cfg).unwrap();
    assert!(r.identically_zero);
    assert!(r.moments.iter().all(|&m| m == 0.0));
    assert!(r.ell_monotone);
    assert!(r.ell_mean.last().unwrap() > &0.0);
}

#[test]
fn q_outside_regime_is_rejected() {
    let spec = DriverSpec::new(cylindrical(1.5), linalg::identity(2));
    let cfg = coupling_cfg(0.1, 0.1, vec![0.0, 0.0], vec![0.0, 0.0], 1.2, 10);
    match coupled_uniqueness_experiment(&diag_sin(0.25), &spec, &cfg) {
        Err(CoreError::InvalidInput(msg)) => assert!(msg.contains("q ∈ (α, 2)")),
        other => panic!("{other:?}"),
    }
    let spec = DriverSpec::new(cylindrical(0.6), linalg::identity(2));
    let cfg = coupling_cfg(0.1, 0.1, vec![0.0, 0.0], vec![0.0, 0.0], 1.2, 10);
    assert!(matches!(coupled_uniqueness_experiment(&diag_sin(0.25), &spec, &cfg), Err(CoreError::InvalidInput(_))));
}

#[test]
fn lipschitz_perturbation_scales_like_eps_q() {
    let spec = DriverSpec::new(cylindrical(1.5), linalg::identity(2));
    let q = 1.7;
    let mut ratios = Vec::new();
    for eps in [1e-2, 1e-3, 1e-4] {
        let cfg = coupling_cfg(1.0 / 64.0, 1.0 / 64.0, vec![0.2, 0.1], vec![0.2 + eps, 0.1], q, 2000);
        let r = coupled_uniqueness_experiment(&diag_sin(0.5), &spec, &cfg).unwrap();
        assert!((r.moments[0] / eps.powf(q) - 1.0).abs() < 1e-12, "Z_0");
        ratios.push(r.moments.last().unwrap() / eps.powf(q));
    }
    let max = ratios.iter().cloned().fold(0.0, f64::max);
    let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(max / min <= 5.0, "{ratios:?}");
}

#[test]
fn holder_step_ladder_decreases() {
    let spec = DriverSpec::new(StableMeasure::new(1.5, SphericalMeasure::isotropic(1, 1.0).unwrap()).unwrap(), mat(&[&[1.0]]));
    let mut last = Vec::new();
    for k in 5..=8 {
        let h = 2f64.powi(-k);
        let cfg = coupling_cfg(h, h / 2.0, vec![0.3], vec![0.3], 1.7, 2000);
        let r = coupled_uniqueness_experiment(&holder(0.9), &spec, &cfg).unwrap();
        last.push(*r.moments.last().unwrap());
    }
    assert!(last.windows(2).all(|w| w[1] < w[0]), "{last:?}");
}

#[test]
fn strided_euler_rejects_bad_stride() {
    let l = sample_driver(&DriverSpec::new(cylindrical(1.5), linalg::identity(2)), &uniform_grid(1.0, 10), 2, 1).unwrap();
    assert!(euler_solve_strided(&diag_sin(0.1), &l, &[0.0, 0.0], 3).is_err());
    assert!(euler_solve_strided(&diag_sin(0.1), &l, &[0.0, 0.0], 5).is_ok());
}

#[test]
fn maximal_diagnostic_examples() {
    let pts = vec![vec![0.0], vec![3.0], vec![-7.5]];
    let c = discrete_maximal_diagnostic(&|_| 2.5, &pts, 6, 16);
    assert!(c.iter().all(|&v| (v - 2.5).abs() < 1e-12));
    let ind = |x: &[f64]| if x[0].abs() <= 1.0 { 1.0 } else { 0.0 };
    assert_eq!(discrete_maximal_diagnostic(&ind, &[vec![0.0]], 8, 16)[0], 1.0);
    let g = |x: &[f64]| 1.0 / (x[0].abs() + 0.01).sqrt();
    let mut prev = 0.0;
    for k in 0..10 {
        let v = discrete_maximal_diagnostic(&g, &[vec![0.05]], k, 16)[0];
        assert!(v >= prev);
        prev = v;
    }
}
