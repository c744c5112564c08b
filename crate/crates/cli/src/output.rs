use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliError;

/// Nine significant digits.
pub fn sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    // Exponent after rounding, so 0.99999999996 counts as 1.
    let scientific = format!("{x:.8e}");
    let exponent: i32 = scientific.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..15).contains(&exponent) {
        format!("{:.*}", (8 - exponent).max(0) as usize, x)
    } else {
        scientific
    }
}

fn round(x: f64) -> f64 {
    sig(x).parse().unwrap_or(x)
}

/// Rounds every non-integer number in `value` to nine significant digits.
pub fn round_json(value: Value) -> Value {
    match value {
        Value::Number(n) if n.is_f64() => n.as_f64().map_or(Value::Null, |x| json!(round(x))),
        Value::Array(items) => Value::Array(items.into_iter().map(round_json).collect()),
        Value::Object(map) => Value::Object(map.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    parameters: Value,
    versions: Value,
    outputs: Vec<String>,
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

/// Collects the tables of one command and writes them next to a shared
/// manifest `<stem>.manifest.json`.
pub struct Outputs {
    command: &'static str,
    parameters: Value,
    base: PathBuf,
    format: Format,
    tables: Vec<(String, &'static str, Vec<(usize, f64)>)>,
    documents: Value,
}

impl Outputs {
    pub fn new(command: &'static str, parameters: impl Serialize, base: PathBuf, format: Format) -> Self {
        let parameters = serde_json::to_value(parameters).unwrap_or(Value::Null);
        Outputs { command, parameters, base, format, tables: Vec::new(), documents: json!({}) }
    }

    /// Adds an `m,<column>` table; `suffix` distinguishes extra CSV files.
    pub fn table(&mut self, suffix: &str, column: &'static str, rows: Vec<(usize, f64)>) {
        self.tables.push((suffix.to_string(), column, rows));
    }

    /// Adds a field to the JSON document (ignored for CSV).
    pub fn field(&mut self, key: &str, value: impl Serialize) {
        self.documents[key] = serde_json::to_value(value).unwrap_or(Value::Null);
    }

    fn sibling(&self, suffix: &str, ext: &str) -> PathBuf {
        if suffix.is_empty() {
            return self.base.clone();
        }
        let stem = self.base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        self.base.with_file_name(format!("{stem}.{suffix}.{ext}"))
    }

    pub fn write(self) -> Result<Vec<PathBuf>, CliError> {
        let manifest = manifest_path(&self.base);
        let mut paths = Vec::new();
        match self.format {
            Format::Csv => {
                for (suffix, column, rows) in &self.tables {
                    let path = self.sibling(suffix, "csv");
                    let mut text = format!("m,{column}\n");
                    for (m, x) in rows {
                        text.push_str(&format!("{m},{}\n", sig(*x)));
                    }
                    write_file(&path, &text)?;
                    paths.push(path);
                }
            }
            Format::Json => {
                let mut doc = self.documents.clone();
                for (suffix, column, rows) in &self.tables {
                    let key = if suffix.is_empty() { column.to_string() } else { format!("{suffix}_{column}") };
                    doc[key] = rows.iter().map(|(_, x)| *x).collect::<Vec<_>>().into();
                }
                doc["manifest"] = manifest.display().to_string().into();
                write_file(&self.base, &serde_json::to_string_pretty(&round_json(doc)).unwrap())?;
                paths.push(self.base.clone());
            }
        }
        let record = RunManifest {
            command: self.command,
            parameters: self.parameters,
            versions: json!({ "stopsum": env!("CARGO_PKG_VERSION"), "rng": stopsum::sim::RNG_NAME }),
            outputs: paths.iter().map(|p| p.display().to_string()).collect(),
        };
        write_file(&manifest, &serde_json::to_string_pretty(&round_json(serde_json::to_value(record).unwrap())).unwrap())?;
        paths.push(manifest);
        Ok(paths)
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
