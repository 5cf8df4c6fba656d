//! Artifact emission: CSV tables, snapshots and the per-run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{serialize_config, RunConfig};

/// Float formatting shared by every table and the config serializer: the
/// shortest digits that parse back to the same value, in exponent form for
/// very small or large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// CSV table with a header row, comma separator and '.' decimals.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<String>) {
        assert_eq!(cells.len(), self.header.len(), "row width");
        self.rows.push(cells);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()
    }
}

/// SHA-256 of the canonical serialization, so equivalent configs that differ
/// only in layout hash equally.
pub fn config_hash(c: &RunConfig) -> String {
    hex::encode(Sha256::digest(serialize_config(c).as_bytes()))
}

/// Collects outputs and timings for `manifest.json`.
#[derive(Debug)]
pub struct Manifest {
    command: String,
    outputs: Vec<PathBuf>,
    timings: Vec<(String, Duration)>,
    results: serde_json::Map<String, Value>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Manifest {
            command: command.to_string(),
            outputs: Vec::new(),
            timings: Vec::new(),
            results: serde_json::Map::new(),
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn timing(&mut self, stage: &str, d: Duration) {
        self.timings.push((stage.to_string(), d));
    }

    pub fn result(&mut self, key: &str, value: impl Into<Value>) {
        self.results.insert(key.to_string(), value.into());
    }

    pub fn results(&self) -> &serde_json::Map<String, Value> {
        &self.results
    }

    pub fn outputs(&self) -> &[PathBuf] {
        &self.outputs
    }

    pub fn write(&self, cfg: &RunConfig, status: &str) -> std::io::Result<PathBuf> {
        let timings: serde_json::Map<String, Value> = self
            .timings
            .iter()
            .map(|(k, d)| (k.clone(), json!(d.as_secs_f64())))
            .collect();
        let outputs: Vec<String> = self
            .outputs
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        let doc = json!({
            "command": self.command,
            "status": status,
            "config_sha256": config_hash(cfg),
            "config": serialize_config(cfg),
            "seed": cfg.seed,
            "threads": cfg.threads,
            "versions": {
                "micromag-cli": env!("CARGO_PKG_VERSION"),
                "micromag-core": micromag_core::VERSION,
            },
            "timings_seconds": timings,
            "results": self.results,
            "outputs": outputs,
        });
        let path = cfg.output.join(format!("{}.manifest.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use micromag_core::ShapeSpec;

    #[test]
    fn table_writes_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut t = Table::new(&["a", "b"]);
        t.row(vec![num(0.1), num(-2.5e-12)]);
        t.write(&path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n0.1,-2.5e-12\n");
        for v in [0.1, 1.0 / 3.0, -2.5e-12, 1e-300, 6.02e23, 0.0, 12345.678] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn hash_ignores_layout() {
        let c = RunConfig::new(ShapeSpec::prolate_spheroid(), [8; 3], 0.1);
        let text = "# comment\n[model]\neta=0.1\n[geometry]\nresolution = 8,8,8\nshape = ellipsoid:2,1,1\n[run]\nthreads = 1\n";
        let parsed = crate::config::parse_config(text).unwrap();
        assert_eq!(config_hash(&parsed), config_hash(&c));
        assert_eq!(config_hash(&c).len(), 64);
    }
}
