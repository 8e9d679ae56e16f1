//! Collates the JSON outputs of earlier runs into one markdown summary.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;

use crate::commands::Outcome;

/// Output file, check name and the claim it probes.
const CHECKS: [(&str, &str, &str); 6] = [
    (
        "gate.json",
        "constants gate",
        "the standing inequalities on the hyperbolicity rate, the bump constant and the circle factor hold",
    ),
    (
        "cone.json",
        "cone certification",
        "the cone fields contract and the chart diagonal is strictly dominated",
    ),
    (
        "trap.json",
        "trapping regions",
        "the attracting slab and every level of the filtration are mapped into their interiors",
    ),
    (
        "da.json",
        "DA structure",
        "the DA map has a sink at the origin with a trapping box and expands outside it",
    ),
    (
        "lyapunov.json",
        "Lyapunov exponents",
        "typical orbits have the expected exponent signs with a uniform gap",
    ),
    (
        "basin.json",
        "physical measures",
        "random starts split into the expected number of ergodic clusters with positive basins",
    ),
];

fn describe(name: &str, v: &Value) -> String {
    let f = |p: &str| v.pointer(p).cloned().unwrap_or(Value::Null);
    match name {
        "gate.json" => format!("k = {}, lambda = {}", f("/witnesses/k"), f("/witnesses/lambda")),
        "cone.json" => format!("kappa = {}, chain worst ratio = {}", f("/cones/kappa"), f("/chain/worst_ratio")),
        "trap.json" => {
            let regions = v["regions"].as_array().map_or(0, Vec::len);
            format!("{regions} region(s) checked")
        }
        "da.json" => format!(
            "u0 = {}, converged {}/{}",
            f("/params/u0"),
            f("/converged"),
            f("/orbits")
        ),
        "lyapunov.json" => format!(
            "{} starts, patterns {}, mean exponents {}",
            f("/ensemble"),
            f("/patterns"),
            f("/mean_exponents")
        ),
        "basin.json" => format!(
            "{} clusters with indices {}, unresolved {}",
            f("/cluster_count"),
            f("/cluster_indices"),
            f("/summary/unresolved")
        ),
        _ => String::new(),
    }
}

/// Writes `report.md` into `dir`. Passes when every file present passed.
pub fn report(dir: &Path) -> Result<Outcome> {
    let mut md = String::from("# phdyn report\n\n| check | claim probed | family | mode | status | key numbers |\n|---|---|---|---|---|---|\n");
    let mut found = 0;
    let mut failed = Vec::new();
    for (file, check, claim) in CHECKS {
        let path = dir.join(file);
        if !path.exists() {
            continue;
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        found += 1;
        let passed = v["passed"].as_bool().unwrap_or(false);
        if !passed {
            failed.push(check);
        }
        let family = v.pointer("/header/spec/family").and_then(Value::as_str).unwrap_or("?");
        let mode = v.pointer("/header/spec/mode").and_then(Value::as_str).unwrap_or("?");
        let status = if passed { "PASS".to_string() } else { format!("FAIL ({})", v["failure"].as_str().unwrap_or("")) };
        writeln!(md, "| {check} | {claim} | {family} | {mode} | {status} | {} |", describe(file, &v))?;
    }
    if found == 0 {
        bail!("no outputs found in {}", dir.display());
    }
    std::fs::write(dir.join("report.md"), md)?;
    Ok(if failed.is_empty() { Outcome::Pass } else { Outcome::Fail(format!("failed checks: {failed:?}")) })
}
