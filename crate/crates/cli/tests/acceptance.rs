//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::json;
use stablelike::linalg::{self, Mat};
use stablelike::measures::{LevyModel, ScalarField, SphericalMeasure, StableMeasure};
use stablelike::symbol::{lower_bound_check, sigma_perturbation_exponent};
use stablelike_cli::{execute, Outcome, Subcommand};

struct Verdict {
    passed: bool,
    detail: String,
}

fn run_cli(sub: Subcommand, cfg: serde_json::Value) -> Result<Outcome, String> {
    execute(sub, Some(&cfg.to_string()), Path::new("."), None).map_err(|e| e.to_string())
}

/// Folds the checks of several runs into one verdict.
fn from_outcomes(runs: Vec<(String, Result<Outcome, String>)>) -> Verdict {
    let mut passed = true;
    let mut parts = Vec::new();
    for (label, r) in runs {
        match r {
            Ok(o) => {
                for c in &o.checks {
                    passed &= c.passed;
                    if !c.passed {
                        parts.push(format!("{label}/{} failed: {}", c.name, c.detail));
                    }
                }
                if o.all_passed() {
                    parts.push(format!("{label}: {} checks ok", o.checks.len()));
                }
            }
            Err(e) => {
                passed = false;
                parts.push(format!("{label}: {e}"));
            }
        }
    }
    Verdict {
        passed,
        detail: parts.join("; "),
    }
}

fn cylindrical_json(alpha: f64, weight: f64) -> serde_json::Value {
    json!({
        "alpha": alpha,
        "dim": 2,
        "atoms": [[[1.0, 0.0], weight], [[-1.0, 0.0], weight], [[0.0, 1.0], weight], [[0.0, -1.0], weight]]
    })
}

fn symbol_identity() -> Verdict {
    let runs = ["isotropic-stable-1d", "isotropic-stable"]
        .iter()
        .map(|f| (f.to_string(), run_cli(Subcommand::Symbol, json!({ "measure": { "fixture": f }, "directions": 16 }))))
        .collect();
    from_outcomes(runs)
}

fn sampler_fidelity() -> Verdict {
    let runs = [0.7, 1.0, 1.5]
        .iter()
        .map(|a| {
            let cfg = json!({
                "seed": 2024,
                "driver": { "measure": { "inline": cylindrical_json(*a, 1.0) } },
                "horizon": 1.0,
                "steps": 4,
                "n_paths": 100_000,
                "cf_grid": { "lo": -1.5, "hi": 1.5, "n": 5 },
                "write_ensemble": false
            });
            (format!("α={a}"), run_cli(Subcommand::Sample, cfg))
        })
        .collect();
    from_outcomes(runs)
}

fn random_unit(rng: &mut ChaCha12Rng) -> Vec<f64> {
    let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    vec![t.cos(), t.sin()]
}

fn nondegeneracy_bound() -> Verdict {
    let mut rng = ChaCha12Rng::seed_from_u64(8);
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let alpha = rng.random_range(0.3..1.9);
        let n_atoms = rng.random_range(2..6);
        let atoms: Vec<(Vec<f64>, f64)> = (0..n_atoms).map(|_| (random_unit(&mut rng), rng.random_range(0.1..2.0))).collect();
        let base = StableMeasure::new(alpha, SphericalMeasure::atoms(2, atoms).unwrap()).unwrap();
        let sigma: Mat = linalg::from_rows(&[
            vec![rng.random_range(0.5..2.0), rng.random_range(-0.5..0.5)],
            vec![rng.random_range(-0.5..0.5), rng.random_range(0.5..2.0)],
        ]);
        let amp = rng.random_range(0.0..0.8);
        let model = LevyModel {
            m_min: 1.0 - amp,
            m_max: 1.0 + amp,
            modulation: ScalarField::Sin {
                base: 1.0,
                amplitude: amp,
                axis: 0,
            },
            ..LevyModel::constant(base.clone(), sigma.clone())
        };
        let lower = base.scaled(1.0 - amp);
        let xis: Vec<Vec<f64>> = (0..8)
            .map(|_| {
                let r = 10f64.powf(rng.random_range(-1.0..1.0));
                random_unit(&mut rng).iter().map(|v| r * v).collect()
            })
            .collect();
        let points: Vec<Vec<f64>> = (0..4).map(|_| vec![rng.random_range(-4.0..4.0), 0.0]).collect();
        match lower_bound_check(&lower, &model, &sigma, &xis, &points) {
            Ok(r) => worst = worst.min(r.min_margin),
            Err(e) => {
                return Verdict {
                    passed: false,
                    detail: e.to_string(),
                }
            }
        }
    }
    Verdict {
        passed: worst >= -1e-8,
        detail: format!("minimum margin {worst:e} over 50 configurations"),
    }
}

fn symbol_continuity() -> Verdict {
    let shear = linalg::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]);
    let line = |a: f64| StableMeasure::new(a, SphericalMeasure::atoms(2, vec![(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 1.0)]).unwrap()).unwrap();
    let generic = linalg::from_rows(&[vec![1.2, 0.3], vec![-0.2, 0.9]]);
    let cases: Vec<(f64, StableMeasure, Mat, Vec<Vec<f64>>, f64)> = vec![
        (0.5, line(0.5), shear.clone(), vec![vec![1.0, -1.0]], 0.5),
        (0.8, line(0.8), shear, vec![vec![1.0, -1.0]], 0.8),
        (1.3, StableMeasure::new(1.3, SphericalMeasure::axes(2, 1.0)).unwrap(), generic.clone(), vec![vec![1.0, 0.5], vec![-0.3, 2.0]], 1.0),
        (1.7, StableMeasure::new(1.7, SphericalMeasure::isotropic(2, 1.0).unwrap()).unwrap(), generic, vec![vec![1.0, 0.5]], 1.0),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (alpha, nu, sigma, xis, want) in cases {
        match sigma_perturbation_exponent(&nu, &sigma, &xis, 3..=10) {
            Ok(fit) => {
                let ok = (fit.exponent - want).abs() <= 0.05;
                passed &= ok;
                parts.push(format!("α={alpha}: {:.4} (want {want})", fit.exponent));
            }
            Err(e) => {
                passed = false;
                parts.push(format!("α={alpha}: {e}"));
            }
        }
    }
    Verdict {
        passed,
        detail: parts.join(", "),
    }
}

fn martingale_null() -> Verdict {
    let cfg = json!({
        "seed": 23,
        "driver": { "measure": { "fixture": "isotropic-stable-1d" }, "scheme": { "kind": "exact" } },
        "horizon": 1.0,
        "steps": 20,
        "n_paths": 100_000,
        "test_functions": [
            { "kind": "gaussian", "center": [0.0], "width": 1.0 },
            { "kind": "gaussian", "center": [1.0], "width": 1.0 },
            { "kind": "gaussian", "center": [-2.0], "width": 1.0 }
        ]
    });
    from_outcomes(vec![("mgp-check".into(), run_cli(Subcommand::MgpCheck, cfg))])
}

fn krylov() -> Verdict {
    let cfg = json!({
        "seed": 12,
        "driver": { "measure": { "fixture": "isotropic-stable-1d" } },
        "horizon": 1.0,
        "steps": 64,
        "n_paths": 100_000,
        "f": { "kind": "gaussian", "center": [0.0], "width": 2.0 },
        "p": 8.0,
        "lambdas": [1.0, 2.0, 4.0, 8.0],
        "windows": [[0.0, 1.0], [0.0, 0.5], [0.0, 0.25], [0.0, 0.125]]
    });
    from_outcomes(vec![("krylov".into(), run_cli(Subcommand::Krylov, cfg))])
}

fn resolvent() -> Verdict {
    let constant = json!({
        "symbol": { "kind": "stable", "measure": { "fixture": "isotropic-stable-1d" } },
        "d": 1, "n": 32, "horizon": 1.0, "intervals": 4, "lambda": 0.7,
        "forcing": { "kind": "constant", "value": 2.0 },
        "p_values": [2.0, 4.0],
        "write_fields": false
    });
    let l2 = json!({
        "symbol": { "kind": "stable", "measure": { "fixture": "isotropic-stable-1d" } },
        "d": 1, "n": 64, "horizon": 1.0, "intervals": 5, "lambda": 1.0,
        "forcing": { "kind": "trig", "offset": 0.5, "growth": 0.5,
                     "terms": [ { "k": [1.0], "cos": 1.0 }, { "k": [4.0], "sin": 0.3 }, { "k": [11.0], "cos": 0.2, "sin": -0.1 } ] },
        "p_values": [2.0],
        "write_fields": false
    });
    let refinement = json!({
        "symbol": { "kind": "stable", "measure": { "inline": cylindrical_json(1.2, 0.5) } },
        "d": 2, "n": 64, "horizon": 1.0, "intervals": 4, "lambda": 1.0,
        "forcing": { "kind": "trig", "growth": 1.0,
                     "terms": [ { "k": [1.0, 2.0], "cos": 1.0 }, { "k": [3.0, 1.0], "sin": 0.25 }, { "k": [3.0, -1.0], "sin": 0.25 } ] },
        "p_values": [4.0],
        "refinement": { "resolutions": [64, 128, 256], "p": 4.0 },
        "write_fields": false
    });
    from_outcomes(vec![
        ("constant".into(), run_cli(Subcommand::Pde, constant)),
        ("p=2".into(), run_cli(Subcommand::Pde, l2)),
        ("p=4 refinement".into(), run_cli(Subcommand::Pde, refinement)),
    ])
}

fn uniqueness() -> Verdict {
    let lipschitz = json!({ "min_singular": 0.5, "regularity": { "kind": "lipschitz", "constant": 0.5 },
                            "sigma": { "kind": "diag_sin", "diag": [1.0, 1.0], "amplitude": 0.5, "axis": 0 }, "sup_norm": 1.5 });
    let holder = json!({ "min_singular": 1.0, "regularity": { "kind": "hoelder", "gamma": 0.9, "constant": 1.0 },
                         "sigma": { "kind": "holder_radial", "dim": 1, "gamma": 0.9 }, "sup_norm": 2.0 });
    let cyl = json!({ "measure": { "inline": cylindrical_json(1.5, 0.5) } });
    let identical = json!({
        "seed": 17, "driver": cyl, "coefficient": { "inline": lipschitz },
        "horizon": 1.0, "x0": [0.2, 0.1], "q": 1.7, "n_paths": 10_000,
        "experiment": { "kind": "identical", "step": 1.0 / 32.0 }
    });
    let ladder = json!({
        "seed": 17, "driver": { "measure": { "fixture": "isotropic-stable-1d" } }, "coefficient": { "inline": holder },
        "horizon": 1.0, "x0": [0.3], "q": 1.7, "n_paths": 10_000,
        "experiment": { "kind": "step_ladder", "ks": [5, 6, 7, 8, 9] }
    });
    let perturbation = json!({
        "seed": 17, "driver": cyl, "coefficient": { "inline": lipschitz },
        "horizon": 1.0, "x0": [0.2, 0.1], "q": 1.7, "n_paths": 10_000,
        "experiment": { "kind": "perturbation", "step": 1.0 / 64.0, "eps": [1e-2, 1e-3, 1e-4] }
    });
    from_outcomes(vec![
        ("identical".into(), run_cli(Subcommand::Uniqueness, identical)),
        ("holder ladder".into(), run_cli(Subcommand::Uniqueness, ladder)),
        ("lipschitz perturbation".into(), run_cli(Subcommand::Uniqueness, perturbation)),
    ])
}

fn inequalities() -> Verdict {
    from_outcomes(vec![("ineq-suite".into(), run_cli(Subcommand::IneqSuite, json!({ "seed": 21 })))])
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn reproducibility() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        ("sample", json!({
            "seed": 3, "driver": { "measure": { "inline": cylindrical_json(1.2, 1.0) } },
            "horizon": 1.0, "steps": 8, "n_paths": 4000, "write_ensemble": false
        })),
        ("uniqueness", json!({
            "seed": 4, "driver": { "measure": { "fixture": "isotropic-stable-1d" } },
            "coefficient": { "fixture": "lipschitz-sigma" },
            "horizon": 1.0, "x0": [0.1], "q": 1.7, "n_paths": 2000,
            "experiment": { "kind": "perturbation", "step": 0.0625, "eps": [1e-2, 1e-3] }
        })),
        ("krylov", json!({
            "seed": 5, "driver": { "measure": { "fixture": "isotropic-stable-1d" } },
            "horizon": 1.0, "steps": 16, "n_paths": 3000,
            "f": { "kind": "bump", "center": [0.0], "radius": 1.0 }, "p": 4.0,
            "lambdas": [1.0, 2.0], "windows": [[0.0, 1.0], [0.0, 0.5]]
        })),
        ("ineq-suite", json!({
            "seed": 6, "abs_power": { "pairs": 20000 }, "signed_power": { "budget": 8000 }, "cos_sin": { "budget": 64 },
            "homogeneity": { "signed_power_pairs": 20 }
        })),
        ("mgp-check", json!({
            "seed": 7, "driver": { "measure": { "fixture": "isotropic-stable-1d" } },
            "horizon": 1.0, "steps": 8, "n_paths": 3000,
            "test_functions": [ { "kind": "gaussian", "center": [0.0], "width": 1.0 } ]
        })),
    ];
    let exe = PathBuf::from(env!("CARGO_BIN_EXE_stablelike"));
    let mut parts = Vec::new();
    let mut passed = true;
    for (sub, cfg) in configs {
        let cfg_path = tmp.path().join(format!("{sub}.json"));
        std::fs::write(&cfg_path, cfg.to_string()).unwrap();
        let mut outputs = Vec::new();
        for (run, jobs) in [(0, 1), (1, 8), (2, 8)] {
            let out = tmp.path().join(format!("{sub}-{run}"));
            let status = Command::new(&exe)
                .arg(sub)
                .arg("--config")
                .arg(&cfg_path)
                .arg("--jobs")
                .arg(jobs.to_string())
                .arg("--out")
                .arg(&out)
                .output()
                .unwrap()
                .status;
            if status.code() == Some(2) || !out.join("manifest.json").exists() {
                passed = false;
                parts.push(format!("{sub}: run failed with {status}"));
            }
            outputs.push(csv_bytes(&out));
        }
        let same = !outputs[0].is_empty() && outputs.windows(2).all(|w| w[0] == w[1]);
        passed &= same;
        parts.push(format!("{sub}: {} csv files {}", outputs[0].len(), if same { "identical" } else { "DIFFER" }));
    }
    Verdict {
        passed,
        detail: parts.join(", "),
    }
}

type Criterion = (&'static str, fn() -> Verdict, Option<Duration>);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 symbol identity", symbol_identity, Some(Duration::from_secs(5))),
        ("2 sampler fidelity", sampler_fidelity, Some(Duration::from_secs(180))),
        ("3 nondegeneracy bound", nondegeneracy_bound, Some(Duration::from_secs(30))),
        ("4 symbol continuity", symbol_continuity, None),
        ("5 martingale problem", martingale_null, Some(Duration::from_secs(120))),
        ("6 krylov boundedness", krylov, None),
        ("7 resolvent estimates", resolvent, Some(Duration::from_secs(60))),
        ("8 pathwise uniqueness", uniqueness, Some(Duration::from_secs(300))),
        ("9 inequality suite", inequalities, Some(Duration::from_secs(120))),
        ("10 reproducibility", reproducibility, None),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for (name, f, budget) in criteria {
        if !filter.is_empty() && !filter.iter().any(|x| name.contains(x.as_str())) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        let elapsed = start.elapsed();
        let in_time = budget.is_none_or(|b| elapsed <= b);
        let ok = v.passed && in_time;
        if !ok {
            failures += 1;
        }
        let budget_note = budget.map_or(String::new(), |b| format!(" / budget {}s", b.as_secs()));
        println!(
            "{} criterion {name} ({:.1}s{budget_note}): {}",
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            v.detail
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
