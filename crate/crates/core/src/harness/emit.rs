//! Byte-stable report files: JSON with sorted keys and `%.12e` floats, CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::harness::SuiteReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            _ => Err(Error::InvalidInput(format!("unknown format {s:?}"))),
        }
    }
}

pub fn format_float(v: f64) -> String {
    format!("{v:.12e}")
}

/// Pretty JSON with keys sorted and every float written as `%.12e`.
/// Non-finite floats become `null`.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let value = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, value: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat("  ").take(d));
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("strings serialize")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&serde_json::to_string(k).expect("strings serialize"));
                out.push_str(": ");
                write_value(out, &map[*k], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::InvalidInput(format!("csv: {e}"));
    w.write_record(header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))
}

/// One row per check record.
pub fn records_csv(report: &SuiteReport) -> Result<Vec<u8>> {
    csv_bytes(
        &[
            "suite",
            "instance",
            "name",
            "residual",
            "tolerance",
            "pass",
            "informational",
            "note",
        ],
        report.records.iter().map(|r| {
            vec![
                report.suite.to_string(),
                r.instance.clone(),
                r.name.clone(),
                format_float(r.residual),
                format_float(r.tolerance),
                r.pass.to_string(),
                r.informational.to_string(),
                r.note.clone().unwrap_or_default(),
            ]
        }),
    )
}

/// Counts followed by the worst record per check name.
pub fn summary_csv(report: &SuiteReport) -> Result<Vec<u8>> {
    let s = &report.summary;
    let mut rows = vec![
        vec![
            "count".into(),
            "total".into(),
            s.total.to_string(),
            String::new(),
            String::new(),
        ],
        vec![
            "count".into(),
            "passed".into(),
            s.passed.to_string(),
            String::new(),
            String::new(),
        ],
        vec![
            "count".into(),
            "failed".into(),
            s.failed.to_string(),
            String::new(),
            String::new(),
        ],
        vec![
            "count".into(),
            "informational".into(),
            s.informational.to_string(),
            String::new(),
            String::new(),
        ],
    ];
    for (name, w) in &s.worst {
        rows.push(vec![
            "worst".into(),
            name.clone(),
            format_float(w.residual),
            format_float(w.tolerance),
            w.instance.clone(),
        ]);
    }
    csv_bytes(&["kind", "name", "value", "tolerance", "instance"], rows)
}

/// Writes `<suite>_report.json`, or `<suite>_records.csv` and
/// `<suite>_summary.csv`, into `dir`.
pub fn emit_report(report: &SuiteReport, format: Format, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let suite = report.suite.as_str();
    let files: Vec<(PathBuf, Vec<u8>)> = match format {
        Format::Json => vec![(
            dir.join(format!("{suite}_report.json")),
            to_canonical_json(report)?.into_bytes(),
        )],
        Format::Csv => vec![
            (
                dir.join(format!("{suite}_records.csv")),
                records_csv(report)?,
            ),
            (
                dir.join(format!("{suite}_summary.csv")),
                summary_csv(report)?,
            ),
        ],
    };
    let mut written = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        fs::write(&path, bytes)?;
        written.push(path);
    }
    Ok(written)
}
