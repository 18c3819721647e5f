use std::path::Path;

use serde::Deserialize;
use stablelike::generator::{apply_a, apply_b, apply_l};
use stablelike::measures::LevyModel;

use crate::config::{self, Source, TestFunctionSpec, Tolerances};
use crate::output::{num, nums, Outcome, Table};
use crate::RunError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorConfig {
    #[serde(default)]
    seed: Option<u64>,
    #[serde(default)]
    tolerances: Tolerances,
    model: Source<LevyModel>,
    test_function: TestFunctionSpec,
    points: Vec<Vec<f64>>,
    #[serde(default)]
    time: f64,
}

pub fn run(raw: Option<&str>, base: &Path, seed: Option<u64>) -> Result<Outcome, RunError> {
    let cfg: GeneratorConfig = config::parse(raw)?;
    cfg.tolerances.resolve(&[])?;
    let model = cfg.model.resolve(base)?;
    let d = model.dim();
    let f = cfg.test_function.build(d)?;
    if cfg.points.is_empty() || cfg.points.iter().any(|p| p.len() != d) {
        return Err(config::bad(format!("points must be a non-empty list of {d}-vectors")));
    }
    let mut t = Table::new(
        "generator",
        &["point", "a_value", "a_error", "b_value", "b_error", "l_value", "l_error", "lower_order_split"],
    );
    let mut finite = true;
    let mut rows = Vec::new();
    for x in &cfg.points {
        let a = apply_a(&model, &f, cfg.time, x)?;
        let (b, tele) = apply_b(&model, &f, cfg.time, x)?;
        let l = apply_l(&model, &f, cfg.time, x)?;
        finite &= [a.value, b.value, l.value].iter().all(|v| v.is_finite());
        let split = tele.map(|s| serde_json::to_string(&s).expect("json")).unwrap_or_default();
        t.push(vec![nums(x), num(a.value), num(a.error), num(b.value), num(b.error), num(l.value), num(l.error), split]);
        rows.push(serde_json::json!({"point": x, "a": a, "b": b, "l": l}));
    }
    let mut out = Outcome::new("generator", cfg.seed.or(seed));
    out.check("finite_values", finite, format!("{} points", cfg.points.len()));
    out.report = serde_json::json!({ "test_function": f.name, "time": cfg.time, "rows": rows });
    out.tables.push(t);
    Ok(out)
}
