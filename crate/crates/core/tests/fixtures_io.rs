use stablelike::fixtures::{catalog, lookup, Fixture, FixtureBody};
use stablelike::io::*;
use stablelike::linalg;
use stablelike::measures::SphericalMeasure;
use stablelike::pde::GridField;
use stablelike::sampler::{sample_driver, uniform_grid, DriverSpec};

#[test]
fn catalog_has_the_canonical_fixtures() {
    let c = catalog();
    let cyl = c.iter().find(|f| f.name == "cylindrical-2d-axes").unwrap();
    match &cyl.body {
        FixtureBody::Measure { measure } => match &measure.spherical {
            SphericalMeasure::Atoms { atoms, .. } => assert_eq!(atoms.len(), 4),
            other => panic!("{other:?}"),
        },
        other => panic!("{other:?}"),
    }
    match &lookup("two-driver").unwrap().body {
        FixtureBody::TwoDriver { driver, driver_bar, .. } => assert!(driver_bar.alpha < driver.alpha),
        other => panic!("{other:?}"),
    }
    assert!(lookup("modulated").is_ok());
    assert!(lookup("isotropic-stable").is_ok());
    assert!(lookup("no-such-thing").is_err());
    let mut names: Vec<&str> = c.iter().map(|f| f.name.as_str()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), c.len());
}

#[test]
fn fixtures_round_trip_through_json() {
    for f in catalog() {
        f.validate().unwrap();
        let s = f.to_json();
        let back = Fixture::from_json(&s).unwrap();
        assert_eq!(back.to_json(), s, "{}", f.name);
    }
}

#[test]
fn fixture_json_is_strict() {
    let s = lookup("isotropic-stable").unwrap().to_json();
    let extra = s.replacen('{', "{\"surprise\": 1,", 1);
    assert!(Fixture::from_json(&extra).is_err());
    let bad = lookup("two-driver").unwrap().to_json().replace("0.8", "1.7");
    assert!(Fixture::from_json(&bad).is_err());
}

#[test]
fn ensemble_round_trip() {
    let m = stablelike::fixtures::cylindrical_2d(1.2).unwrap();
    let ens = sample_driver(&DriverSpec::new(m, linalg::identity(2)), &uniform_grid(1.0, 5), 17, 4).unwrap();
    let bytes = encode_ensemble(&ens);
    assert_eq!(&bytes[..8], b"SLENS001");
    assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
    assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 17);
    assert_eq!(bytes.len(), 40 + 8 * (6 + 17 * 6 * 2));
    let back = decode_ensemble(&bytes).unwrap();
    assert_eq!(back.states, ens.states);
    assert_eq!(back.times, ens.times);
    assert_eq!(back.seed, ens.seed);
    assert_eq!(back.n_paths(), 17);
    assert!(decode_ensemble(&bytes[..bytes.len() - 1]).is_err());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("e.bin");
    write_ensemble(&p, &ens).unwrap();
    assert_eq!(read_ensemble(&p).unwrap().states, ens.states);
}

#[test]
fn fields_round_trip() {
    let fields: Vec<GridField> = (0..3).map(|k| GridField::random_bandlimited(2, 8, 1.5, 3, k).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    write_fields(dir.path(), "u", &fields, &[0.0, 0.5, 1.0]).unwrap();
    let (h, back) = read_fields(dir.path(), "u").unwrap();
    assert_eq!(h.times, vec![0.0, 0.5, 1.0]);
    assert_eq!(back, fields);
    assert!(field_header(&fields, &[0.0]).is_err());
}
