//! JSON documents with a provenance block, and flat CSV tables.

use std::io::Write;
use std::path::{Path, PathBuf};

use fbq_core::simulator::Histogram;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::{Common, Failure, Format, Outcome};

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_path: Option<String>,
    /// SHA-256 of the config file bytes.
    pub config_sha256: String,
    pub library_version: &'static str,
    pub seed: Option<u64>,
}

impl Provenance {
    pub fn new(path: Option<&PathBuf>, text: &str) -> Self {
        Self {
            config_path: path.map(|p| p.display().to_string()),
            config_sha256: format!("{:x}", Sha256::digest(text.as_bytes())),
            library_version: fbq_core::VERSION,
            seed: None,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Rows of JSON scalars under a fixed header.
pub struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: Vec<Value>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells);
    }

    /// Rows as objects keyed by the header.
    pub fn records(&self) -> Value {
        Value::Array(
            self.rows
                .iter()
                .map(|r| Value::Object(self.header.iter().map(|h| h.to_string()).zip(r.iter().cloned()).collect()))
                .collect(),
        )
    }

    fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", self.header.join(","))?;
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(cell).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) if s.contains([',', '"', '\n']) => format!("\"{}\"", s.replace('"', "\"\"")),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub struct Emitter<'a> {
    common: &'a Common,
    provenance: Provenance,
    command: &'static str,
}

impl<'a> Emitter<'a> {
    pub fn new(common: &'a Common, provenance: Provenance, command: &'static str) -> Self {
        Self {
            common,
            provenance,
            command,
        }
    }

    /// JSON: `{command, provenance, result}`. CSV: the table alone.
    pub fn emit(self, body: Value, table: &Table) -> Outcome<()> {
        let mut buf = Vec::new();
        match self.common.format {
            Format::Json => {
                let doc = json!({ "command": self.command, "provenance": self.provenance, "result": body });
                serde_json::to_writer_pretty(&mut buf, &doc).map_err(|e| Failure::io(e.to_string()))?;
                buf.push(b'\n');
            }
            Format::Csv => table.write_csv(&mut buf).map_err(|e| Failure::io(e.to_string()))?,
        }
        match &self.common.output {
            Some(path) => std::fs::write(path, buf).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display()))),
            None => std::io::stdout().write_all(&buf).map_err(|e| Failure::io(e.to_string())),
        }
    }
}

pub fn write_histograms(dir: &Path, hists: &[Histogram]) -> Outcome<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("cannot create {}: {e}", dir.display())))?;
    for h in hists {
        let path = dir.join(format!("{}.csv", h.name));
        let f = std::fs::File::create(&path).map_err(|e| Failure::io(format!("cannot write {}: {e}", path.display())))?;
        h.write_csv(std::io::BufWriter::new(f)).map_err(|e| Failure::io(e.to_string()))?;
    }
    Ok(())
}
