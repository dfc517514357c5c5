//! CSV input and output.
//!
//! Matrices and panels are plain numeric rows without a header. Numbers are
//! written with 17 significant digits so that values round-trip exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::bench::BenchTable;
use crate::error::{Error, Result};
use crate::linalg::SymmetricMatrix;
use crate::moments::TimeSeriesPanel;

pub const BENCH_HEADER: [&str; 10] = [
    "model", "p", "n", "alpha", "method", "metric", "mean", "sd", "replications", "failures",
];

/// 17 significant digits in scientific notation.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

pub fn read_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("row {}, column {}: '{field}' is not a number", r + 1, c + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::BadInput(format!(
                    "row {} has {} fields, expected {}",
                    r + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::DegenerateInput("CSV input has no rows".into()));
    }
    Ok(rows)
}

pub fn write_rows<W: Write>(writer: W, rows: &[Vec<f64>]) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in rows {
        wtr.write_record(row.iter().map(|&v| format_f64(v))).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Io(e.to_string()))
}

pub fn read_rows_file(path: &Path) -> Result<Vec<Vec<f64>>> {
    read_rows(File::open(path).map_err(|e| io_err(path, e))?)
}

pub fn write_rows_file(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    write_rows(File::create(path).map_err(|e| io_err(path, e))?, rows)
}

/// Panel from a `p x n` file, or `n x p` when `transpose` is set.
pub fn read_panel(path: &Path, transpose: bool) -> Result<TimeSeriesPanel> {
    let rows = read_rows_file(path)?;
    if !transpose {
        return TimeSeriesPanel::from_rows(&rows);
    }
    let p = rows[0].len();
    let cols: Vec<Vec<f64>> = (0..p).map(|i| rows.iter().map(|r| r[i]).collect()).collect();
    TimeSeriesPanel::from_rows(&cols)
}

pub fn write_panel(path: &Path, x: &TimeSeriesPanel) -> Result<()> {
    write_rows_file(path, &x.rows())
}

pub fn read_symmetric(path: &Path) -> Result<SymmetricMatrix> {
    let rows = read_rows_file(path)?;
    let dim = rows.len();
    if rows[0].len() != dim {
        return Err(Error::DimMismatch {
            expected: format!("{dim} x {dim}"),
            actual: format!("{dim} x {}", rows[0].len()),
        });
    }
    SymmetricMatrix::from_row_major(dim, &rows.concat())
}

pub fn write_symmetric(path: &Path, m: &SymmetricMatrix) -> Result<()> {
    write_rows_file(path, &m.rows())
}

pub fn write_bench<W: Write>(writer: W, table: &BenchTable) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(BENCH_HEADER).map_err(csv_err)?;
    for r in &table.rows {
        wtr.write_record([
            r.model.to_string(),
            r.p.to_string(),
            r.n.to_string(),
            r.alpha.clone(),
            r.method.clone(),
            r.metric.clone(),
            format_f64(r.mean),
            format_f64(r.sd),
            r.replications.to_string(),
            r.failures.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::Io(e.to_string()))
}
