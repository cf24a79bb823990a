//! File formats for activation matrices.
//!
//! `rsm-binary`: the 4 magic bytes `RSM1`, then `n` and `p` as little-endian
//! u64, then `n * p` little-endian f64 values in row-major order.
//!
//! CSV: one example per row, comma separated. A first line that does not
//! parse as numbers is treated as a header and skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::ActivationMatrix;
use crate::error::{Error, Result};

pub const RSM_MAGIC: &[u8; 4] = b"RSM1";
const HEADER_LEN: usize = 4 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    RsmBinary,
}

impl MatrixFormat {
    /// Picks the format from the file extension (`.csv`, `.rsm`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(MatrixFormat::Csv),
            "rsm" | "bin" => Some(MatrixFormat::RsmBinary),
            _ => None,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a matrix; the result is always marked uncentered.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<ActivationMatrix> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    match format {
        MatrixFormat::Csv => parse_csv(&bytes),
        MatrixFormat::RsmBinary => parse_rsm(&bytes),
    }
}

pub(crate) fn parse_rsm(bytes: &[u8]) -> Result<ActivationMatrix> {
    let parse = |offset: usize, message: String| Error::Parse {
        location: format!("byte {offset}"),
        message,
    };
    if bytes.len() < HEADER_LEN {
        return Err(parse(
            bytes.len(),
            format!("truncated header ({} of {HEADER_LEN} bytes)", bytes.len()),
        ));
    }
    if &bytes[..4] != RSM_MAGIC {
        return Err(parse(0, "bad magic, expected \"RSM1\"".into()));
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap());
    let p = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let count = n
        .checked_mul(p)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| parse(4, format!("dimensions {n}x{p} overflow")))?;
    let expected = count
        .checked_mul(8)
        .and_then(|b| b.checked_add(HEADER_LEN))
        .ok_or_else(|| parse(4, format!("dimensions {n}x{p} overflow")))?;
    if bytes.len() != expected {
        return Err(parse(
            bytes.len().min(expected),
            format!(
                "payload length mismatch: {n}x{p} needs {expected} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ActivationMatrix::from_row_major(n as usize, p as usize, &values)
}

pub(crate) fn encode_rsm(x: &ActivationMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * x.n() * x.p());
    out.extend_from_slice(RSM_MAGIC);
    out.extend_from_slice(&(x.n() as u64).to_le_bytes());
    out.extend_from_slice(&(x.p() as u64).to_le_bytes());
    for v in x.to_row_major() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn write_rsm(path: &Path, x: &ActivationMatrix) -> Result<()> {
    fs::write(path, encode_rsm(x)).map_err(|e| io_err(path, e))
}

/// Writes CSV with 17 significant digits, which round-trips float64 exactly.
pub fn write_csv(path: &Path, x: &ActivationMatrix) -> Result<()> {
    let mut buf = Vec::new();
    for r in 0..x.n() {
        let line: Vec<String> = x.data().row(r).iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(buf, "{}", line.join(",")).expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub(crate) fn parse_csv(bytes: &[u8]) -> Result<ActivationMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            location: e
                .position()
                .map_or_else(|| "unknown line".into(), |p| format!("line {}", p.line())),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && width.is_none() => {
                // header line
                width = Some(record.len());
                continue;
            }
            Err(e) => {
                return Err(Error::Parse {
                    location: format!("line {line}"),
                    message: format!("non-numeric field: {e}"),
                })
            }
        };
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!(
                "non-finite entry at line {line}, field {}",
                i + 1
            )));
        }
        match width {
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    location: format!("line {line}"),
                    message: format!("ragged row: {} fields, expected {w}", values.len()),
                })
            }
            _ => width = Some(values.len()),
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            location: "line 1".into(),
            message: "no numeric rows".into(),
        });
    }
    ActivationMatrix::from_rows(&rows)
}
