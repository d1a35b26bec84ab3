//! Field files and report envelopes.
//!
//! A field file is `{"meta": {q, p, N, T, R_omega, nz, nr}, "values": [...]}` with
//! the `nz × (nr + 1)` values in row-major order, each written with 17 significant
//! digits. Reports wrap a command's result together with the resolved
//! configuration and a SHA-256 hash of everything that went into the run.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::error::{Error, Result};
use crate::mesh::{Exponents, Field, Geometry, Grid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub q: f64,
    pub p: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "R_omega")]
    pub r_omega: f64,
    pub nz: usize,
    pub nr: usize,
}

impl FieldMeta {
    pub fn of(u: &Field, exps: &Exponents) -> Self {
        let g = u.grid();
        let geo = g.geometry();
        Self {
            q: exps.q(),
            p: exps.p(),
            n: exps.dim(),
            t: geo.half_period(),
            r_omega: geo.r_omega(),
            nz: g.nz(),
            nr: g.nr(),
        }
    }
}

#[derive(Deserialize)]
struct FieldDoc {
    meta: FieldMeta,
    values: Vec<f64>,
}

/// Serializes a field; `extra` entries (for example a provenance block) are
/// appended after `meta` and `values`.
pub fn field_to_json(u: &Field, exps: &Exponents, extra: &[(&str, Value)]) -> Result<String> {
    let meta = serde_json::to_string(&FieldMeta::of(u, exps))?;
    let mut s = String::with_capacity(24 * u.values().len() + 256);
    s.push_str("{\"meta\":");
    s.push_str(&meta);
    s.push_str(",\"values\":[");
    for (k, v) in u.values().iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        write!(s, "{v:.16e}").expect("writing to a String");
    }
    s.push(']');
    for (key, value) in extra {
        write!(s, ",{}:{}", serde_json::to_string(key)?, serde_json::to_string(value)?).expect("writing to a String");
    }
    s.push_str("}\n");
    Ok(s)
}

/// Parses a field file, rebuilding the grid from its metadata.
pub fn field_from_json(text: &str) -> Result<(Field, Exponents)> {
    let doc: FieldDoc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let m = doc.meta;
    let exps = Exponents::new(m.q, m.p, m.n)?;
    let grid: Arc<Grid> = Grid::new(Geometry::new(m.t, m.r_omega, m.n)?, m.nz, m.nr)?;
    let u = Field::from_values(&grid, doc.values)?;
    Ok((u, exps))
}

/// The optional top-level `"lambda"` entry written alongside solver output.
pub fn field_lambda(text: &str) -> Result<Option<f64>> {
    #[derive(Deserialize)]
    struct Probe {
        lambda: Option<f64>,
    }
    let p: Probe = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    Ok(p.lambda)
}

pub fn write_field(path: &Path, u: &Field, exps: &Exponents, extra: &[(&str, Value)]) -> Result<()> {
    std::fs::write(path, field_to_json(u, exps, extra)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(Field, Exponents)> {
    field_from_json(&std::fs::read_to_string(path)?)
}

/// Lowercase hex SHA-256 of the concatenated parts, each prefixed by its length so
/// that different splits cannot collide.
pub fn content_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the resolved configuration, the command line that matters for the
/// result, and the bytes of any input files.
pub fn input_hash(config: &Config, command: &str, inputs: &[&[u8]]) -> Result<String> {
    let c = serde_json::to_vec(config)?;
    let mut parts: Vec<&[u8]> = vec![&c, command.as_bytes()];
    parts.extend_from_slice(inputs);
    Ok(content_hash(&parts))
}

/// `{"command", "input_hash", "config", "result"}` with deterministic key order.
pub fn report_envelope(command: &str, config: &Config, input_hash: &str, result: Value) -> Result<Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), Value::String(command.into()));
    m.insert("input_hash".into(), Value::String(input_hash.into()));
    m.insert("config".into(), serde_json::to_value(config)?);
    m.insert("result".into(), result);
    Ok(Value::Object(m))
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_round_trip_is_lossless() {
        let g = Grid::new(Geometry::new(0.5, 2.0, 4).unwrap(), 8, 8).unwrap();
        let u = Field::from_fn(&g, |z, r| (4.0 - r * r) * (1.0 + 0.3 * z.sin()) / 3.0);
        let e = Exponents::new(0.1, 0.2, 4).unwrap();
        let text = field_to_json(&u, &e, &[("note", Value::String("x".into()))]).unwrap();
        let (v, e2) = field_from_json(&text).unwrap();
        assert_eq!(u.values(), v.values());
        assert_eq!(e2.q(), 0.1);
        assert_eq!(v.grid().nz(), 8);
    }

    #[test]
    fn malformed_files_are_rejected() {
        assert!(matches!(field_from_json("{}"), Err(Error::Format(_))));
        let text = r#"{"meta":{"q":0.1,"p":0.2,"N":4,"T":1,"R_omega":1,"nz":4,"nr":4},"values":[1,2]}"#;
        assert!(field_from_json(text).is_err());
    }

    #[test]
    fn hash_separates_parts() {
        assert_ne!(content_hash(&[b"ab", b"c"]), content_hash(&[b"a", b"bc"]));
        assert_eq!(content_hash(&[b"x"]).len(), 64);
    }
}
