//! File writers. Every file opens with a header naming the tool version and
//! the fully resolved parameter set, so a result can be reproduced from the
//! file alone.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use phdyn_core::maps::SystemSpec;
use serde::Serialize;
use serde_json::{json, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// The JSON `header` object shared by every output.
pub fn header(command: &str, spec: &SystemSpec, seed: u64) -> Value {
    json!({
        "tool": "phdyn",
        "version": VERSION,
        "command": command,
        "seed": seed,
        "spec": spec,
    })
}

/// Writes `{"header": …, <payload fields>}` with stable key order.
pub fn write_json<T: Serialize>(path: &Path, header: &Value, payload: &T) -> Result<()> {
    let mut obj = serde_json::Map::new();
    obj.insert("header".into(), header.clone());
    match serde_json::to_value(payload)? {
        Value::Object(m) => obj.extend(m),
        other => {
            obj.insert("result".into(), other);
        }
    }
    let text = serde_json::to_string_pretty(&Value::Object(obj))?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Writes `#`-prefixed header lines followed by a CSV table.
pub fn write_csv(path: &Path, header: &Value, columns: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# phdyn {VERSION}\n"));
    out.push_str(&format!("# header: {}\n", serde_json::to_string(header)?));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(columns)?;
    for r in rows {
        w.write_record(r)?;
    }
    out.push_str(std::str::from_utf8(&w.into_inner()?)?);
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

/// Shortest round-trip representation, identical on every platform.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_round_trips() {
        assert_eq!(fmt_f64(0.1), "0.1");
        assert_eq!(fmt_f64(1e-300), "1e-300");
    }
}
