use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::training::Provenance;

/// One `(method, k, metric, value)` record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongRow {
    pub method: String,
    pub k: usize,
    pub metric: String,
    pub value: f64,
}

impl LongRow {
    pub fn new(method: &str, k: usize, metric: &str, value: f64) -> Self {
        LongRow {
            method: method.to_string(),
            k,
            metric: metric.to_string(),
            value,
        }
    }
}

/// `# config_sha256=<hex> seed=<n>` followed by a headed CSV body.
pub fn write_long_csv(path: &Path, prov: &Provenance, rows: &[LongRow]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# config_sha256={} seed={}", prov.config_sha256, prov.seed).map_err(|e| Error::io(path, e))?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        if rows.is_empty() {
            w.write_record(["method", "k", "metric", "value"])?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Pretty JSON of `value` with `config_sha256` and `seed` added at the top
/// level. Non-object values are wrapped under `"data"`.
pub fn write_json_tagged<T: Serialize>(path: &Path, prov: &Provenance, value: &T) -> Result<()> {
    let mut map = serde_json::Map::new();
    map.insert("config_sha256".into(), prov.config_sha256.clone().into());
    map.insert("seed".into(), prov.seed.into());
    match serde_json::to_value(value)? {
        serde_json::Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("data".into(), other);
        }
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(map))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
