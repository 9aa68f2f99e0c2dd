//! `label,f1,...,fd` text files. Numeric fields only, no quoting.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::Dataset;
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Reads a dataset; a first line whose first token is not a number is a header.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_csv(&text)
}

pub(crate) fn parse_csv(text: &str) -> Result<Dataset> {
    let mut labels = Vec::new();
    let mut data = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let first = fields.next().unwrap_or_default();
        if idx == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        let label = first.parse::<usize>().map_err(|_| Error::BadLabel {
            line: line_no,
            token: first.to_string(),
        })?;
        let start = data.len();
        for tok in fields {
            match tok.parse::<f64>() {
                Ok(v) if v.is_finite() => data.push(v),
                _ => {
                    return Err(Error::BadValue {
                        line: line_no,
                        token: tok.to_string(),
                    })
                }
            }
        }
        let found = data.len() - start;
        match dim {
            None => dim = Some(found),
            Some(d) if d != found => {
                return Err(Error::RaggedRow {
                    line: line_no,
                    expected: d,
                    found,
                })
            }
            _ => {}
        }
        labels.push(label);
    }
    let d = dim.ok_or(Error::Empty("csv rows"))?;
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Matrix::new(labels.len(), d, data)?, labels, k)
}

/// Writes a headerless file that [`load_csv`] reads back exactly.
pub fn write_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (row, y) in ds.features().iter_rows().zip(ds.labels()) {
        write!(out, "{y}").unwrap();
        for v in row {
            // `{:?}` prints the shortest representation that round-trips.
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}
