use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::error::{CliError, CliResult};

pub const SCHEMA: &str = "kmono/1";

fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| write_error(dir, e))
}

/// Adds the schema tag to a summary object.
pub fn document(body: Value) -> Value {
    let mut map = match body {
        Value::Object(m) => m,
        other => {
            let mut m = Map::new();
            m.insert("data".into(), other);
            m
        }
    };
    map.insert("schema".into(), Value::String(SCHEMA.into()));
    Value::Object(map)
}

pub fn write_json(dir: &Path, name: &str, body: Value) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(&document(body)).expect("JSON values serialize");
    text.push('\n');
    fs::write(&path, text).map_err(|e| write_error(&path, e))?;
    Ok(path)
}

pub fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<PathBuf> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| write_error(&path, e))?;
    w.write_record(header).map_err(|e| write_error(&path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| write_error(&path, e))?;
    }
    w.flush().map_err(|e| write_error(&path, e))?;
    Ok(path)
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Shortest representation that reads back to the same value, in
/// scientific notation for very small or very large magnitudes.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || (1e-4..1e15).contains(&a) || !a.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Reads one positive decimal per line from a CSV file, skipping blank
/// lines and an optional header equal to `name`. A file whose content
/// starts with `[` is read as a JSON array instead.
pub fn read_values(path: &Path, name: &str) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let field = record.get(0).unwrap_or("");
        if field.is_empty() || (values.is_empty() && field.eq_ignore_ascii_case(name)) {
            continue;
        }
        let v: f64 = field.parse().map_err(|_| {
            CliError::Input(format!(
                "{}: line {}: not a number: {field:?}",
                path.display(),
                line + 1
            ))
        })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(CliError::Input(format!("{}: no values", path.display())));
    }
    Ok(values)
}
