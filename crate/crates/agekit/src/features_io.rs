//! Feature matrix files: binary `AGEF` (magic, N and D as u32 LE, then f32 LE
//! row-major) or CSV with one frame per line.

use std::fs;
use std::path::Path;

use agekit_core::Matrix;

use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AGEF";

pub fn encode_agef(m: &Matrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * m.as_slice().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    for &v in m.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_agef(bytes: &[u8]) -> std::result::Result<Matrix, String> {
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err("not an AGEF feature file".into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (n, d) = (word(4), word(8));
    let body = &bytes[12..];
    if Some(body.len()) != n.checked_mul(d).and_then(|x| x.checked_mul(4)) {
        return Err(format!("header says {n}x{d} floats, body has {} bytes", body.len()));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect();
    Matrix::from_vec(n, d, data).map_err(|e| e.to_string())
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Writes CSV when the extension is `.csv`, AGEF otherwise.
pub fn save_features(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_csv(path) {
        let mut text = String::new();
        for row in m.iter_rows() {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        text.into_bytes()
    } else {
        encode_agef(m)
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !is_csv(path) {
        return decode_agef(&bytes).map_err(|m| Error::format(path, m));
    }
    let text = String::from_utf8(bytes).map_err(|e| Error::format(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 1)))?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::format(path, format!("line {}: {} values, expected {first}", i + 1, row.len())));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::format(path, "no frames"));
    }
    Matrix::from_rows(&rows).map_err(|e| Error::format(path, e))
}
