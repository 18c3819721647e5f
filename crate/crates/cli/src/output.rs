//! In-memory results and their serialization to disk.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// RFC 4180 bytes with CRLF line endings.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// Shortest round-trip form; scientific notation for very small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-5..1e16).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

pub fn nums(v: &[f64]) -> String {
    v.iter().map(|x| num(*x)).collect::<Vec<_>>().join(";")
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub subcommand: String,
    pub seed: Option<u64>,
    pub report: Value,
    pub tables: Vec<Table>,
    pub blobs: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
}

impl Outcome {
    pub fn new(subcommand: &str, seed: Option<u64>) -> Self {
        Outcome {
            subcommand: subcommand.to_string(),
            seed,
            report: Value::Null,
            tables: Vec::new(),
            blobs: Vec::new(),
            checks: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn report_json(&self) -> String {
        let v = serde_json::json!({
            "subcommand": self.subcommand,
            "seed": self.seed,
            "all_passed": self.all_passed(),
            "checks": self.checks,
            "results": self.report,
        });
        serde_json::to_string_pretty(&v).expect("report serializes") + "\n"
    }
}

pub fn sha256_hex(data: impl AsRef<[u8]>) -> String {
    let d = Sha256::digest(data.as_ref());
    d.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct ManifestBase {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub jobs: usize,
}

#[derive(Serialize)]
struct Artifact {
    file: String,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    subcommand: &'a str,
    config_path: &'a Option<String>,
    config_sha256: &'a Option<String>,
    seed: Option<u64>,
    jobs: usize,
    versions: serde_json::Value,
    wall_time_seconds: f64,
    status: &'a str,
    partial: bool,
    error: Option<&'a str>,
    artifacts: Vec<Artifact>,
}

fn versions() -> Value {
    serde_json::json!({
        "stablelike": stablelike::VERSION,
        "stablelike-cli": env!("CARGO_PKG_VERSION"),
    })
}

pub fn write_outcome(dir: &Path, base: &ManifestBase, o: &Outcome, wall: f64) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut files: Vec<(String, Vec<u8>)> = vec![("report.json".into(), o.report_json().into_bytes())];
    for t in &o.tables {
        files.push((format!("{}.csv", t.name), t.to_csv()));
    }
    files.extend(o.blobs.iter().cloned());
    let mut artifacts = Vec::new();
    for (name, data) in &files {
        fs::write(dir.join(name), data)?;
        artifacts.push(Artifact {
            file: name.clone(),
            bytes: data.len(),
            sha256: sha256_hex(data),
        });
    }
    let m = Manifest {
        subcommand: &base.subcommand,
        config_path: &base.config_path,
        config_sha256: &base.config_sha256,
        seed: o.seed,
        jobs: base.jobs,
        versions: versions(),
        wall_time_seconds: wall,
        status: if o.all_passed() { "pass" } else { "fail" },
        partial: false,
        error: None,
        artifacts,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")
}

/// Manifest for a run that stopped after its configuration was accepted.
pub fn write_failure(dir: &Path, base: &ManifestBase, seed: Option<u64>, error: &str, wall: f64) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let m = Manifest {
        subcommand: &base.subcommand,
        config_path: &base.config_path,
        config_sha256: &base.config_sha256,
        seed,
        jobs: base.jobs,
        versions: versions(),
        wall_time_seconds: wall,
        status: "error",
        partial: true,
        error: Some(error),
        artifacts: Vec::new(),
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)? + "\n")
}
