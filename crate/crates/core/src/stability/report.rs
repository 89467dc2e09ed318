//! Serializable inequality records and their regression diff.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// One evaluated inequality `lhs ≤ rhs + tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub name: String,
    /// Index into the report's entry list.
    pub entry: Option<usize>,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
    /// `rhs + tolerance − lhs`.
    pub margin: f64,
    pub pass: bool,
    pub constants: BTreeMap<String, f64>,
}

impl ReportRow {
    pub fn new(name: &str, entry: Option<usize>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let margin = rhs + tolerance - lhs;
        Self {
            name: name.into(),
            entry,
            lhs,
            rhs,
            tolerance,
            margin,
            pass: margin >= 0.0 && lhs.is_finite() && rhs.is_finite(),
            constants: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.constants.insert(key.into(), value);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInfo {
    pub name: String,
    pub first_hash: String,
    pub second_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub experiment: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    pub pairs: Vec<PairInfo>,
    pub grid: BTreeMap<String, f64>,
    /// `(θ, ψ)` of every entry referenced by the rows.
    pub entries: Vec<[f64; 2]>,
    pub rows: Vec<ReportRow>,
    pub observations: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl StabilityReport {
    pub fn new(experiment: &str) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            experiment: experiment.into(),
            config_hash: None,
            pairs: Vec::new(),
            grid: BTreeMap::new(),
            entries: Vec::new(),
            rows: Vec::new(),
            observations: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| !r.pass)
    }

    pub fn rows_named<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a ReportRow> {
        self.rows.iter().filter(move |r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Flat rows `name, entry, theta, psi, lhs, rhs, tolerance, margin, pass`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| Error::Io(e.to_string());
        let mut writer = csv::Writer::from_path(path).map_err(io)?;
        writer
            .write_record([
                "name",
                "entry",
                "theta",
                "psi",
                "lhs",
                "rhs",
                "tolerance",
                "margin",
                "pass",
            ])
            .map_err(io)?;
        for row in &self.rows {
            let (index, theta, psi) =
                match row.entry.and_then(|i| self.entries.get(i).map(|e| (i, e))) {
                    Some((i, e)) => (i.to_string(), e[0].to_string(), e[1].to_string()),
                    None => (String::new(), String::new(), String::new()),
                };
            writer
                .write_record([
                    row.name.clone(),
                    index,
                    theta,
                    psi,
                    row.lhs.to_string(),
                    row.rhs.to_string(),
                    row.tolerance.to_string(),
                    row.margin.to_string(),
                    row.pass.to_string(),
                ])
                .map_err(io)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// A field that differs between two reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiff {
    pub row: usize,
    pub name: String,
    pub field: String,
    pub first: Option<String>,
    pub second: Option<String>,
}

fn close(a: f64, b: f64, relative: f64) -> bool {
    a == b || (a - b).abs() <= relative * a.abs().max(b.abs())
}

/// Row-by-row comparison; numbers agree when their relative difference is at
/// most `relative`.
pub fn diff_reports(
    first: &StabilityReport,
    second: &StabilityReport,
    relative: f64,
) -> Result<Vec<RowDiff>> {
    if first.schema_version != second.schema_version {
        return Err(Error::Invalid(format!(
            "schema versions differ ({} against {})",
            first.schema_version, second.schema_version
        )));
    }
    let mut diffs = Vec::new();
    let count = first.rows.len().max(second.rows.len());
    for i in 0..count {
        match (first.rows.get(i), second.rows.get(i)) {
            (Some(a), Some(b)) => {
                let mut push = |field: &str, x: String, y: String| {
                    diffs.push(RowDiff {
                        row: i,
                        name: a.name.clone(),
                        field: field.into(),
                        first: Some(x),
                        second: Some(y),
                    })
                };
                if a.name != b.name {
                    push("name", a.name.clone(), b.name.clone());
                }
                if a.entry != b.entry {
                    push("entry", format!("{:?}", a.entry), format!("{:?}", b.entry));
                }
                for (field, x, y) in [
                    ("lhs", a.lhs, b.lhs),
                    ("rhs", a.rhs, b.rhs),
                    ("tolerance", a.tolerance, b.tolerance),
                    ("margin", a.margin, b.margin),
                ] {
                    if !close(x, y, relative) {
                        push(field, x.to_string(), y.to_string());
                    }
                }
                if a.pass != b.pass {
                    push("pass", a.pass.to_string(), b.pass.to_string());
                }
                let keys: std::collections::BTreeSet<&String> =
                    a.constants.keys().chain(b.constants.keys()).collect();
                for key in keys {
                    match (a.constants.get(key), b.constants.get(key)) {
                        (Some(x), Some(y)) if close(*x, *y, relative) => {}
                        (x, y) => diffs.push(RowDiff {
                            row: i,
                            name: a.name.clone(),
                            field: format!("constants.{key}"),
                            first: x.map(|v| v.to_string()),
                            second: y.map(|v| v.to_string()),
                        }),
                    }
                }
            }
            (a, b) => diffs.push(RowDiff {
                row: i,
                name: a.or(b).map(|r| r.name.clone()).unwrap_or_default(),
                field: "row".into(),
                first: a.map(|r| r.name.clone()),
                second: b.map(|r| r.name.clone()),
            }),
        }
    }
    Ok(diffs)
}
