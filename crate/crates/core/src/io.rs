//! CSV and JSON artifacts: single header line, UTF-8, LF line endings.
//!
//! Floats are written in Rust's shortest round-trip form, so a write/read
//! cycle reproduces every value bit for bit.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::ifp::{AssetGrid, Policy};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.display().to_string(),
        message: message.into(),
    }
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    let f = File::create(path).map_err(|e| file_err(path, e))?;
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(BufWriter::new(f)))
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => file_err(path, io),
        other => format_err(path, format!("{other:?}")),
    }
}

/// Write rows of `header.len()` columns.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Write a single-column sample.
pub fn write_column(path: &Path, header: &str, values: &[f64]) -> Result<(), IoError> {
    let mut w = writer(path)?;
    w.write_record([header]).map_err(|e| csv_err(path, e))?;
    let mut buf = String::new();
    for v in values {
        buf.clear();
        use std::fmt::Write as _;
        let _ = write!(buf, "{v}");
        w.write_record([buf.as_str()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| file_err(path, e))
}

/// Read a single-column sample, skipping the header line.
pub fn read_column(path: &Path) -> Result<Vec<f64>, IoError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?;
    if headers.len() != 1 {
        return Err(format_err(
            path,
            format!("expected one column, header has {}", headers.len()),
        ));
    }
    let mut out = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let field = rec.get(0).unwrap_or("").trim();
        let v: f64 = field
            .parse()
            .map_err(|_| format_err(path, format!("row {}: not a number: {field:?}", line + 2)))?;
        out.push(v);
    }
    Ok(out)
}

/// Export a policy as rows `(a, z, c)` with `z` the state label.
pub fn write_policy(path: &Path, policy: &Policy, labels: &[String]) -> Result<(), IoError> {
    let nodes = policy.grid().nodes();
    let mut rows = Vec::with_capacity(nodes.len() * policy.states());
    for z in 0..policy.states() {
        let label = labels.get(z).cloned().unwrap_or_else(|| z.to_string());
        for (a, c) in nodes.iter().zip(policy.values(z)) {
            rows.push(vec![a.to_string(), label.clone(), c.to_string()]);
        }
    }
    write_table(path, &["a", "z", "c"], &rows)
}

/// Read a policy written by [`write_policy`] against the problem's grid and
/// state labels. Every grid node must appear once per state.
pub fn read_policy(path: &Path, grid: Arc<AssetGrid>, labels: &[String]) -> Result<Policy, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["a", "z", "c"] {
        return Err(format_err(path, "policy header must be a,z,c"));
    }
    let nodes = grid.nodes().to_vec();
    let n = nodes.len();
    let mut values = vec![vec![f64::NAN; n]; labels.len()];
    let mut seen = 0usize;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let row = line + 2;
        let num = |i: usize| -> Result<f64, IoError> {
            rec.get(i)
                .unwrap_or("")
                .parse()
                .map_err(|_| format_err(path, format!("row {row}: column {i} is not a number")))
        };
        let (a, c) = (num(0)?, num(2)?);
        let label = rec.get(1).unwrap_or("");
        let z = labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| format_err(path, format!("row {row}: unknown state {label:?}")))?;
        let i = nodes
            .iter()
            .position(|x| (x - a).abs() <= 1e-12 * x.abs())
            .ok_or_else(|| format_err(path, format!("row {row}: a = {a} is not a grid node")))?;
        if !values[z][i].is_nan() {
            return Err(format_err(path, format!("row {row}: duplicate node")));
        }
        values[z][i] = c;
        seen += 1;
    }
    if seen != n * labels.len() {
        return Err(format_err(
            path,
            format!("expected {} rows, found {seen}", n * labels.len()),
        ));
    }
    Policy::new(grid, values).map_err(|e| format_err(path, e.to_string()))
}

/// Pretty JSON with a trailing newline. Key order follows the struct.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| format_err(path, e.to_string()))?;
    text.push('\n');
    let mut f = File::create(path).map_err(|e| file_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| file_err(path, e))
}

pub fn read_to_string(path: &Path) -> Result<String, IoError> {
    let mut s = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|e| file_err(path, e))?;
    Ok(s)
}
