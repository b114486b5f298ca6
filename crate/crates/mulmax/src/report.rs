//! Report plumbing: run manifests, canonical JSON (sorted keys, fixed
//! float formatting, infinities as strings), and file emission. Canonical
//! bytes make reports diffable across runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::Result;

/// Everything needed to reproduce a run, embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub input: Option<String>,
    /// resolved parameters (ν, ρ, D, k, q, scope, seed, …)
    pub params: BTreeMap<String, Value>,
    pub version: String,
    /// unix seconds; overridable for byte-stable regression runs
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(subcommand: &str, input: Option<&str>, timestamp: Option<u64>) -> Self {
        let timestamp = timestamp.unwrap_or_else(|| {
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        });
        Self {
            subcommand: subcommand.into(),
            input: input.map(String::from),
            params: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp,
        }
    }

    pub fn param(&mut self, key: &str, value: Value) -> &mut Self {
        self.params.insert(key.into(), value);
        self
    }

    pub fn to_value(&self) -> Value {
        let mut m = Map::new();
        m.insert("subcommand".into(), self.subcommand.clone().into());
        m.insert(
            "input".into(),
            self.input.clone().map_or(Value::Null, Value::String),
        );
        m.insert(
            "params".into(),
            Value::Object(self.params.clone().into_iter().collect()),
        );
        m.insert("version".into(), self.version.clone().into());
        m.insert("timestamp".into(), self.timestamp.into());
        Value::Object(m)
    }
}

/// Float to JSON value; non-finite values become strings so they survive
/// the round trip.
pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::String("nan".into())
    } else if x.is_infinite() {
        Value::String(if x > 0.0 { "inf" } else { "-inf" }.into())
    } else {
        serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
    }
}

/// Serialize a float-free (or finite-float) structure straight to a value.
pub fn val<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable report piece")
}

fn push_canonical(out: &mut String, v: &Value) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                let _ = write!(out, "{i}");
            } else if let Some(u) = n.as_u64() {
                let _ = write!(out, "{u}");
            } else {
                let _ = write!(out, "{:.16e}", n.as_f64().expect("numeric"));
            }
        }
        Value::String(s) => {
            let _ = write!(out, "{}", Value::String(s.clone()));
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                push_canonical(out, item);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // serde_json's map is BTreeMap-backed: iteration is key-sorted
            out.push('{');
            for (i, (k, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", Value::String(k.clone()));
                out.push(':');
                push_canonical(out, item);
            }
            out.push('}');
        }
    }
}

/// Canonical rendering: sorted keys, no whitespace, floats in fixed
/// 17-significant-digit scientific notation.
pub fn canonical(v: &Value) -> String {
    let mut out = String::new();
    push_canonical(&mut out, v);
    out.push('\n');
    out
}

pub fn write_report(path: &Path, v: &Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, canonical(v))?;
    Ok(())
}

/// Assemble the standard envelope: manifest + named body sections.
pub fn envelope(manifest: &RunManifest, body: Vec<(&str, Value)>) -> Value {
    let mut m = Map::new();
    m.insert("manifest".into(), manifest.to_value());
    for (k, v) in body {
        m.insert(k.into(), v);
    }
    Value::Object(m)
}
