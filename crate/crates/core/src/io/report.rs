//! Run reports (JSON) and flat CSV tables.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chain::Tolerances;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub meta: ReportMeta,
    /// Echo of the inputs that determine the result.
    pub input: Value,
    pub result: Value,
    pub timing: Timing,
}

impl Report {
    pub fn new(command: &str, seed: Option<u64>, tolerances: Tolerances, input: Value, result: Value) -> Report {
        Report {
            meta: ReportMeta {
                tool: "metastab".into(),
                version: crate::VERSION.into(),
                command: command.into(),
                seed,
                tolerances,
            },
            input,
            result,
            timing: Timing { elapsed_seconds: 0.0 },
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("cannot serialize report: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Report> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }
}

/// Machine-readable error record printed on failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub error: String,
    pub message: String,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partial: Option<Value>,
}

impl Diagnostic {
    pub fn from_error(e: &Error, exit_code: i32, partial: Option<Value>) -> Self {
        Self {
            error: e.kind().to_string(),
            message: e.to_string(),
            exit_code,
            partial,
        }
    }
}

/// One flat table, written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(name: impl Into<String>, columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            name: name.into(),
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let io = |e: &dyn std::fmt::Display| Error::Io(format!("{}: {e}", dir.display()));
        std::fs::create_dir_all(dir).map_err(|e| io(&e))?;
        let mut w = csv::Writer::from_path(dir.join(format!("{}.csv", self.name))).map_err(|e| io(&e))?;
        w.write_record(&self.columns).map_err(|e| io(&e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| io(&e))?;
        }
        w.flush().map_err(|e| io(&e))
    }
}
