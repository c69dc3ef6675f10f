use std::io::Write;
use std::path::Path;

use crate::error::{PcError, Result};

/// One CSV field.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    /// Written with 17 significant digits so that it parses back exactly.
    Float(f64),
    Text(String),
    Missing,
}

impl Cell {
    pub fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format!("{v:.16e}"),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Float)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

/// Writes a CSV atomically: to a temporary file in the target directory,
/// which is then renamed over `path`.
pub fn write_metrics(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| PcError::io(dir, e))?;
    {
        let mut w = csv::Writer::from_writer(tmp.as_file());
        w.write_record(header)?;
        for row in rows {
            if row.len() != header.len() {
                return Err(PcError::InvalidConfig(format!(
                    "metrics row has {} fields, header has {}",
                    row.len(),
                    header.len()
                )));
            }
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush().map_err(|e| PcError::io(path, e))?;
    }
    tmp.as_file().sync_all().map_err(|e| PcError::io(path, e))?;
    tmp.persist(path).map_err(|e| PcError::io(path, e.error))?;
    Ok(())
}

/// Same CSV written to any stream (e.g. stdout).
pub fn write_metrics_to<W: Write>(out: W, header: &[&str], rows: &[Vec<Cell>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(Cell::render))?;
    }
    w.flush().map_err(|e| PcError::io("<stream>", e))?;
    Ok(())
}
