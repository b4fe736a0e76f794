//! CSV and JSON artifacts with provenance headers.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::Result;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A CSV table written with a `#` comment header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Shortest round-trip rendering (exponent form for very small or large
/// magnitudes); non-finite values become empty cells.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else {
        String::new()
    }
}

/// Everything a command produces.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub results: Option<Table>,
    pub histogram: Option<Table>,
    pub report: Map<String, Value>,
    /// One line per estimator or check, printed to stdout.
    pub summary: Vec<String>,
}

pub struct Provenance<'a> {
    pub command: &'a str,
    pub config_hash: &'a str,
    pub config: Value,
}

fn write_table(path: &Path, table: &Table, prov: &Provenance) -> Result<()> {
    let mut body = format!(
        "# dostrace {VERSION} command={} config_sha256={}\n",
        prov.command, prov.config_hash
    );
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    body.push_str(&String::from_utf8_lossy(&bytes));
    fs::write(path, body)?;
    Ok(())
}

/// Writes `results.csv`, `report.json` and optionally `histogram.csv` into
/// `dir`, returning the written paths.
pub fn write_artifacts(dir: &Path, artifacts: &Artifacts, prov: &Provenance) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    if let Some(t) = &artifacts.results {
        let p = dir.join("results.csv");
        write_table(&p, t, prov)?;
        written.push(p);
    }
    if let Some(t) = &artifacts.histogram {
        let p = dir.join("histogram.csv");
        write_table(&p, t, prov)?;
        written.push(p);
    }
    let mut report = artifacts.report.clone();
    report.insert(
        "_meta".into(),
        json!({
            "toolkit": "dostrace",
            "version": VERSION,
            "command": prov.command,
            "config_sha256": prov.config_hash,
            "config": prov.config,
        }),
    );
    let p = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&Value::Object(report))?;
    text.push('\n');
    fs::write(&p, text)?;
    written.push(p);
    Ok(written)
}
