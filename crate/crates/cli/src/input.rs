//! Delimited numeric tables: rows are observations, columns are variables.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use efa_lrt::DataMatrix;
use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Delim {
    Byte(u8),
    Whitespace,
}

fn detect_delimiter(line: &str) -> Delim {
    for b in [b',', b'\t', b';'] {
        if line.as_bytes().contains(&b) {
            return Delim::Byte(b);
        }
    }
    Delim::Whitespace
}

fn split_records(text: &str, delim: Delim) -> Result<Vec<Vec<String>>> {
    match delim {
        Delim::Whitespace => Ok(text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .map(|l| l.split_whitespace().map(str::to_owned).collect::<Vec<_>>())
            .filter(|r| !r.is_empty())
            .collect()),
        Delim::Byte(b) => {
            let mut rdr = csv::ReaderBuilder::new()
                .delimiter(b)
                .has_headers(false)
                .trim(csv::Trim::All)
                .flexible(true)
                .comment(Some(b'#'))
                .from_reader(text.as_bytes());
            let mut out = Vec::new();
            for rec in rdr.records() {
                let rec = rec?;
                if rec.iter().all(str::is_empty) {
                    continue;
                }
                out.push(rec.iter().map(str::to_owned).collect());
            }
            Ok(out)
        }
    }
}

/// Reads a comma, tab, semicolon or whitespace separated file. The first row is
/// taken as a header when any of its cells fails to parse as a number.
pub fn read_table(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .with_context(|| format!("{} is empty", path.display()))?;
    let mut records = split_records(&text, detect_delimiter(first))
        .with_context(|| format!("cannot parse {}", path.display()))?;

    let header = if records[0].iter().any(|c| c.parse::<f64>().is_err()) {
        Some(records.remove(0))
    } else {
        None
    };
    if records.is_empty() {
        bail!("{} has a header but no data rows", path.display());
    }
    let width = records[0].len();
    if let Some(h) = &header {
        if h.len() != width {
            bail!("{}: header has {} columns but data rows have {width}", path.display(), h.len());
        }
    }

    let line_offset = if header.is_some() { 2 } else { 1 };
    let mut flat = Vec::with_capacity(records.len() * width);
    for (i, rec) in records.iter().enumerate() {
        if rec.len() != width {
            bail!(
                "{}: data row {} has {} columns, expected {width}",
                path.display(),
                i + line_offset,
                rec.len()
            );
        }
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                anyhow::anyhow!(
                    "{}: non-numeric cell `{cell}` at data row {}, column {}",
                    path.display(),
                    i + line_offset,
                    j + 1
                )
            })?;
            if !v.is_finite() {
                bail!("{}: non-finite value at data row {}, column {}", path.display(), i + line_offset, j + 1);
            }
            flat.push(v);
        }
    }
    Ok(DMatrix::from_row_slice(records.len(), width, &flat))
}

pub fn read_data(path: &Path) -> Result<DataMatrix> {
    DataMatrix::new(read_table(path)?).with_context(|| format!("invalid data in {}", path.display()))
}

/// Reads a square matrix, e.g. a hypothesized covariance.
pub fn read_square(path: &Path) -> Result<DMatrix<f64>> {
    let m = read_table(path)?;
    if m.nrows() != m.ncols() {
        bail!(
            "{}: expected a square matrix, got {} x {}",
            path.display(),
            m.nrows(),
            m.ncols()
        );
    }
    Ok(m)
}
