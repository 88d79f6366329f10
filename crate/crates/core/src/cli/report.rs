//! `report.json` and CSV tables.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// One certification check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    /// `"<"` or `">"`.
    pub relation: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn below(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, relation: "<", passed: value < threshold }
    }

    pub fn above(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, relation: ">", passed: value > threshold }
    }

    /// A yes/no condition recorded as 1 or 0.
    pub fn holds(name: &str, ok: bool) -> Self {
        Self { name: name.into(), value: if ok { 1.0 } else { 0.0 }, threshold: 0.5, relation: ">", passed: ok }
    }
}

/// A numeric table written as CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(file: &str, header: &[&str]) -> Self {
        Self { file: file.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(&self.file)).map_err(|e| Error::Io(e.to_string()))?;
        w.write_record(&self.header).map_err(|e| Error::Io(e.to_string()))?;
        for r in &self.rows {
            w.write_record(r.iter().map(|v| v.to_string())).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// What a subcommand produces before it is written out.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Value,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    /// Mesh used for `--dump-operator` and `--dump-mesh`.
    pub mesh: Option<crate::geometry::BoundaryMesh>,
}

/// Wall-clock data, the only run-dependent part of a report.
#[derive(Debug, Clone, Serialize)]
pub struct Timestamp {
    pub unix_seconds: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub command: String,
    pub version: &'static str,
    pub inputs: Value,
    pub results: Value,
    pub checks: Vec<Check>,
    pub certified: bool,
    pub error: Option<String>,
    pub files: Vec<String>,
    pub timestamp: Timestamp,
}

impl Report {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))?;
        std::fs::write(dir.join("report.json"), text + "\n")?;
        Ok(())
    }
}
