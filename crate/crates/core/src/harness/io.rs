//! On-disk formats.
//!
//! Matrices are stored as an ASCII header line `rows cols` followed by the
//! entries as little-endian `f64` in column-major order. A CSV writer exists
//! for inspection only.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kernels::DenseMatrix;
use crate::tree::SplitTree;

pub fn write_matrix(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut bytes = format!("{} {}\n", m.nrows(), m.ncols()).into_bytes();
    bytes.reserve(8 * m.len());
    for v in m.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(path, "header is not text"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(path, format!("bad header {header:?}")))?;
    let [rows, cols] = dims[..] else {
        return Err(Error::format(path, format!("header needs two integers, got {header:?}")));
    };
    let body = &bytes[nl + 1..];
    if body.len() != 8 * rows * cols {
        return Err(Error::format(
            path,
            format!("expected {} data bytes for {rows}x{cols}, found {}", 8 * rows * cols, body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect::<Vec<_>>();
    Ok(DenseMatrix::from_vec(rows, cols, data))
}

pub fn write_matrix_csv(path: &Path, m: &DenseMatrix) -> Result<()> {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_tree(path: &Path, tree: &SplitTree) -> Result<()> {
    fs::write(path, tree.to_text()).map_err(|e| Error::io(path, e))
}

pub fn read_tree(path: &Path, n_dofs: usize) -> Result<SplitTree> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    SplitTree::from_text(&text, n_dofs).map_err(|e| Error::format(path, e.to_string()))
}

/// Write `header` and `rows` as a CSV file.
pub fn write_csv_lines(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = || -> std::io::Result<()> {
        writeln!(f, "{header}")?;
        for r in rows {
            writeln!(f, "{r}")?;
        }
        Ok(())
    };
    write().map_err(|e| Error::io(path, e))
}
