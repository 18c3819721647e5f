use std::path::Path;

use serde::Deserialize;
use stablelike::fixtures::{catalog, FixtureBody};

use crate::config;
use crate::output::{Outcome, Table};
use crate::RunError;

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FixturesConfig {
    /// Restrict the listing to these names.
    #[serde(default)]
    names: Option<Vec<String>>,
}

pub fn run(raw: Option<&str>, _base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: FixturesConfig = match raw {
        Some(_) => config::parse(raw)?,
        None => FixturesConfig::default(),
    };
    let mut list = catalog();
    if let Some(names) = &cfg.names {
        for n in names {
            if !list.iter().any(|f| &f.name == n) {
                return Err(config::bad(format!("unknown fixture {n:?}")));
            }
        }
        list.retain(|f| names.contains(&f.name));
    }
    let mut out = Outcome::new("fixtures", seed);
    let mut t = Table::new("fixtures", &["name", "kind", "description"]);
    let mut round_trip = true;
    for f in &list {
        let kind = match f.body {
            FixtureBody::Measure { .. } => "measure",
            FixtureBody::Model { .. } => "model",
            FixtureBody::TwoDriver { .. } => "two_driver",
            FixtureBody::Coefficient { .. } => "coefficient",
            FixtureBody::TestFunction { .. } => "test_function",
        };
        t.push(vec![f.name.clone(), kind.into(), f.description.clone()]);
        let s = f.to_json();
        round_trip &= stablelike::fixtures::Fixture::from_json(&s).map(|g| g.to_json() == s).unwrap_or(false);
    }
    out.check("json_round_trip", round_trip, format!("{} fixtures", list.len()));
    let json: Vec<serde_json::Value> = list.iter().map(|f| serde_json::from_str(&f.to_json()).expect("valid json")).collect();
    out.blobs.push(("fixtures.json".into(), (serde_json::to_string_pretty(&json).expect("json") + "\n").into_bytes()));
    out.report = serde_json::json!({ "count": list.len(), "names": list.iter().map(|f| f.name.clone()).collect::<Vec<_>>() });
    out.tables.push(t);
    Ok(out)
}
