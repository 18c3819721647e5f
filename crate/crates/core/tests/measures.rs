use proptest::prelude::*;
use stablelike::measures::*;
use stablelike::quad::{integrate_breaks, QuadOpts};
use stablelike::CoreError;

fn unit2(phi: f64) -> Vec<f64> {
    vec![phi.cos(), phi.sin()]
}

#[test]
fn nondegeneracy_axes_alpha_one() {
    let s = SphericalMeasure::axes(2, 1.0);
    let k = nondegeneracy_constant(&s, 1.0).unwrap();
    // brute force over a fine angle grid: 2(|cos φ| + |sin φ|) is minimal on the axes
    let brute = (0..100_000)
        .map(|i| {
            let phi = std::f64::consts::TAU * i as f64 / 100_000.0;
            2.0 * (phi.cos().abs() + phi.sin().abs())
        })
        .fold(f64::INFINITY, f64::min);
    assert!((k - 2.0).abs() < 1e-9, "{k}");
    assert!((brute - 2.0).abs() < 1e-12);
}

#[test]
fn nondegeneracy_degenerate_pair() {
    let s = SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 1.0)]).unwrap();
    let (k, dir) = nondegeneracy_minimizer(&s, 0.7).unwrap();
    assert_eq!(k, 0.0);
    assert!(dir[0].abs() < 1e-12);
}

#[test]
fn nondegeneracy_isotropic_matches_angle_quadrature() {
    let s = SphericalMeasure::isotropic(2, 1.0).unwrap();
    let k = nondegeneracy_constant(&s, 0.5).unwrap();
    let pi = std::f64::consts::PI;
    let oracle = integrate_breaks(
        |p: f64| p.cos().abs().sqrt(),
        &[0.0, 0.5 * pi, 1.5 * pi, 2.0 * pi],
        QuadOpts::tol(1e-14, 1e-14),
    )
    .value
        / (2.0 * pi);
    assert!((k - oracle).abs() < 1e-12, "{k} vs {oracle}");
    assert!((k - 0.762_759_763_501_813_3).abs() < 1e-9);
}

#[test]
fn nondegeneracy_three_dimensional_axes() {
    let s = SphericalMeasure::axes(3, 1.0);
    // minimum of 2 Σ|θ₀ᵢ| on the sphere is 2, attained on the axes
    let k = nondegeneracy_constant(&s, 1.0).unwrap();
    assert!((k - 2.0).abs() < 1e-7, "{k}");
}

#[test]
fn nondegeneracy_rejects_bad_dimension() {
    let s = SphericalMeasure::Atoms {
        dim: 3,
        atoms: vec![Atom {
            direction: vec![1.0, 0.0],
            weight: 1.0,
        }],
    };
    assert!(matches!(nondegeneracy_constant(&s, 1.0), Err(CoreError::InvalidInput(_))));
}

#[test]
fn symmetry_check_examples() {
    let pair = SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 1.0)]).unwrap();
    let r = check_alpha1_symmetry(&pair);
    assert!(r.symmetric && r.residual == vec![0.0, 0.0]);
    let one = SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0)]).unwrap();
    let r = check_alpha1_symmetry(&one);
    assert!(!r.symmetric && r.residual == vec![1.0, 0.0]);
    let iso = SphericalMeasure::isotropic(3, 2.0).unwrap();
    assert!(check_alpha1_symmetry(&iso).symmetric);
}

#[test]
fn alpha_one_requires_symmetry() {
    let one = SphericalMeasure::atoms(1, vec![(vec![1.0], 1.0)]).unwrap();
    assert!(StableMeasure::new(1.0, one.clone()).is_err());
    assert!(StableMeasure::new(1.2, one).is_ok());
}

#[test]
fn truncated_moment_examples() {
    let m1 = StableMeasure::new(1.0, SphericalMeasure::isotropic(1, 1.0).unwrap()).unwrap();
    assert!((truncated_moment(&m1, 1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
    let m2 = StableMeasure::new(0.5, SphericalMeasure::isotropic(2, 2.0).unwrap()).unwrap();
    assert!((truncated_moment(&m2, 0.5, 1.0).unwrap() - 2.0 * 2f64.sqrt()).abs() < 1e-14);
    assert_eq!(truncated_moment(&m2, 0.0, 1.0).unwrap(), 0.0);
    assert!(matches!(truncated_moment(&m2, 1.0, 0.5), Err(CoreError::DivergentIntegral(_))));
}

#[test]
fn truncated_moment_against_radial_quadrature() {
    let m = StableMeasure::new(1.3, SphericalMeasure::axes(2, 0.7)).unwrap();
    let (r, p) = (0.8, 2.0);
    let mass = m.total_mass();
    let q = integrate_breaks(|s: f64| s.powf(p - 1.0 - 1.3), &[0.0, 0.1, r], QuadOpts::tol(1e-14, 1e-13)).value;
    assert!((truncated_moment(&m, r, p).unwrap() - mass * q).abs() < 1e-10);
    // moment up to R plus the quadrature of the remaining shell reproduces the moment on the larger ball
    let big = 3.0;
    let shell = integrate_breaks(|s: f64| s.powf(p - 2.3), &[r, big], QuadOpts::tol(1e-14, 1e-14)).value;
    let lhs = truncated_moment(&m, r, p).unwrap() + mass * shell;
    assert!((lhs - truncated_moment(&m, big, p).unwrap()).abs() < 1e-8);
}

#[test]
fn tail_mass_examples() {
    let m1 = StableMeasure::new(1.0, SphericalMeasure::isotropic(1, 1.0).unwrap()).unwrap();
    assert!((tail_mass(&m1, 1.0).unwrap() - 1.0).abs() < 1e-15);
    let m2 = StableMeasure::new(0.5, SphericalMeasure::isotropic(1, 1.0).unwrap()).unwrap();
    assert!((tail_mass(&m2, 4.0).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(tail_mass(&m2, f64::INFINITY).unwrap(), 0.0);
    assert!(tail_mass(&m2, 1e300).unwrap() < 1e-140);
    assert!(matches!(tail_mass(&m2, 0.0), Err(CoreError::InvalidInput(_))));
}

fn two_atoms(w1: f64, w2: f64) -> StableMeasure {
    StableMeasure::new(
        0.8,
        SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], w1), (vec![0.0, 1.0], w2)]).unwrap(),
    )
    .unwrap()
}

#[test]
fn dominates_examples() {
    assert!(dominates(&two_atoms(1.0, 1.0), &two_atoms(2.0, 3.0)).unwrap());
    assert!(!dominates(&two_atoms(1.0, 1.0), &two_atoms(1.0, 0.5)).unwrap());
    let a = StableMeasure::new(0.8, SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0)]).unwrap()).unwrap();
    let b = StableMeasure::new(0.8, SphericalMeasure::atoms(2, vec![(vec![0.0, 1.0], 1.0)]).unwrap()).unwrap();
    assert!(matches!(dominates(&a, &b), Err(CoreError::Undecidable(_))));
}

#[test]
fn json_round_trip_examples() {
    let m = StableMeasure::new(1.2, SphericalMeasure::axes(2, 0.5)).unwrap();
    let j = m.to_json();
    assert!(j.contains("\"atoms\""));
    assert_eq!(StableMeasure::from_json(&j).unwrap(), m);
    let iso = StableMeasure::new(0.4, SphericalMeasure::isotropic(3, 2.5).unwrap()).unwrap();
    let j = iso.to_json();
    assert!(j.contains("\"isotropic\":2.5"));
    assert_eq!(StableMeasure::from_json(&j).unwrap(), iso);
    assert!(StableMeasure::from_json(r#"{"dim":1,"alpha":0.5,"isotropic":1,"extra":0}"#).is_err());
}

fn random_atoms() -> impl Strategy<Value = SphericalMeasure> {
    prop::collection::vec((0.0..std::f64::consts::TAU, 0.05..3.0f64), 1..6).prop_map(|v| {
        SphericalMeasure::atoms(2, v.into_iter().map(|(p, w)| (unit2(p), w)).collect()).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nondegeneracy_scales_linearly(s in random_atoms(), alpha in 0.2..1.9f64, c in 0.1..10.0f64) {
        let a = nondegeneracy_constant(&s, alpha).unwrap();
        let b = nondegeneracy_constant(&s.scaled(c), alpha).unwrap();
        prop_assert!((b - c * a).abs() <= 1e-10 * (c * a).max(1e-300) + 1e-300);
    }

    #[test]
    fn nondegeneracy_rotation_invariant(s in random_atoms(), alpha in 0.3..1.9f64, phi in 0.0..6.28f64) {
        let q = stablelike::linalg::from_rows(&[vec![phi.cos(), -phi.sin()], vec![phi.sin(), phi.cos()]]);
        let a = nondegeneracy_constant(&s, alpha).unwrap();
        let b = nondegeneracy_constant(&s.rotated(&q), alpha).unwrap();
        prop_assert!((a - b).abs() <= 1e-6 * a.max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn domination_orders_nondegeneracy(s in random_atoms(), extra in prop::collection::vec(0.0..2.0f64, 6), alpha in 0.2..1.9f64) {
        let SphericalMeasure::Atoms { dim, atoms } = s.clone() else { unreachable!() };
        let bigger = SphericalMeasure::Atoms {
            dim,
            atoms: atoms.iter().zip(&extra).map(|(a, e)| Atom { direction: a.direction.clone(), weight: a.weight + e }).collect(),
        };
        let n1 = StableMeasure::new(alpha, s.clone()).unwrap();
        let n2 = StableMeasure::new(alpha, bigger.clone()).unwrap();
        prop_assert!(dominates(&n1, &n2).unwrap());
        prop_assert!(nondegeneracy_constant(&s, alpha).unwrap() <= nondegeneracy_constant(&bigger, alpha).unwrap() + 1e-9);
    }

    #[test]
    fn json_round_trip(s in random_atoms(), alpha in 0.1..1.9f64) {
        let m = StableMeasure::new(alpha, s).unwrap();
        let back = StableMeasure::from_json(&m.to_json()).unwrap();
        prop_assert!((back.alpha - m.alpha).abs() <= 1e-15 * m.alpha);
        let (SphericalMeasure::Atoms { atoms: a, .. }, SphericalMeasure::Atoms { atoms: b, .. }) = (&m.spherical, &back.spherical) else { unreachable!() };
        for (x, y) in a.iter().zip(b) {
            prop_assert!((x.weight - y.weight).abs() <= 1e-15 * x.weight);
        }
    }
}
