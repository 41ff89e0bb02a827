//! CSV payloads and the run manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

/// A CSV cell. Reals use 17 significant digits in scientific notation.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Real(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, header: &[&'static str]) -> Self {
        Table { name: name.to_string(), header: header.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self, config_hash: &str) -> Result<Vec<u8>, CliError> {
        let mut buf = format!("# config sha256={config_hash}\n").into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(&self.header).map_err(|e| CliError::Io(e.to_string()))?;
            for row in &self.rows {
                w.write_record(row.iter().map(Cell::render)).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        Ok(buf)
    }

    pub fn write(&self, dir: &Path, config_hash: &str) -> Result<PathBuf, CliError> {
        let path = dir.join(format!("{}.csv", self.name));
        fs::write(&path, self.to_bytes(config_hash)?).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Run record written next to the payloads; holds the only non-deterministic
/// data (wall-clock time).
#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub command: String,
    pub config_sha256: String,
    /// Git blob hash (SHA-1 over `blob <len>\0<bytes>`) of the raw config file.
    pub input_blob: String,
    pub seed: u64,
    pub payloads: Vec<String>,
    pub seconds: f64,
}

impl ResultRecord {
    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let mut f = fs::File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        serde_json::to_writer_pretty(&mut f, self).map_err(|e| CliError::Io(e.to_string()))?;
        writeln!(f).map_err(|e| CliError::Io(e.to_string()))
    }
}

pub fn git_blob_hash(bytes: &[u8]) -> String {
    use sha1::{Digest, Sha1};
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}
