//! CSV datasets with optional missing cells, and plain matrix files.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tpdm::Tpdm;

/// Numeric columns plus an optional label column (e.g. dates).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    /// `n × p`; missing cells are NaN.
    pub values: DMatrix<f64>,
    pub labels: Option<Vec<String>>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "NaN" | "nan" | "null")
}

impl Dataset {
    pub fn from_reader<R: std::io::Read>(reader: R, label_column: Option<&str>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let label_idx = match label_column {
            Some(name) => Some(
                headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::InvalidArgument(format!("label column '{name}' not found in header")))?,
            ),
            None => None,
        };
        let names: Vec<String> =
            headers.iter().enumerate().filter(|(i, _)| Some(*i) != label_idx).map(|(_, h)| h.clone()).collect();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            for (c, cell) in record.iter().enumerate() {
                if Some(c) == label_idx {
                    labels.push(cell.to_string());
                } else if is_missing(cell) {
                    data.push(f64::NAN);
                } else {
                    let v: f64 = cell.parse().map_err(|_| {
                        Error::InvalidArgument(format!(
                            "row {}, column '{}': '{cell}' is not a number",
                            r + 1,
                            headers[c]
                        ))
                    })?;
                    if !v.is_finite() {
                        return Err(Error::InvalidArgument(format!(
                            "row {}, column '{}': non-finite value",
                            r + 1,
                            headers[c]
                        )));
                    }
                    data.push(v);
                }
            }
        }
        let n = data.len() / names.len().max(1);
        Ok(Self { values: DMatrix::from_row_slice(n, names.len(), &data), names, labels: label_idx.map(|_| labels) })
    }

    pub fn read(path: &Path, label_column: Option<&str>) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Self::from_reader(file, label_column)
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::InvalidArgument(format!("column '{name}' not found")))
    }

    /// Row indices with every listed column present.
    pub fn complete_rows(&self, columns: &[usize]) -> Vec<usize> {
        (0..self.nrows()).filter(|&r| columns.iter().all(|&c| !self.values[(r, c)].is_nan())).collect()
    }

    /// Sub-matrix of the given rows and columns.
    pub fn select(&self, rows: &[usize], columns: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), columns.len(), |i, j| self.values[(rows[i], columns[j])])
    }
}

pub fn write_matrix_csv<W: std::io::Write>(writer: W, headers: &[String], m: &DMatrix<f64>) -> Result<()> {
    if headers.len() != m.ncols() {
        return Err(Error::shape(m.ncols(), headers.len()));
    }
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(headers)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|v| format!("{v:?}")))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tpdm_csv<W: std::io::Write>(writer: W, names: &[String], tpdm: &Tpdm) -> Result<()> {
    write_matrix_csv(writer, names, tpdm.matrix())
}

pub fn read_tpdm_csv<R: std::io::Read>(reader: R) -> Result<(Vec<String>, Tpdm)> {
    let ds = Dataset::from_reader(reader, None)?;
    if ds.values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument("TPDM file has missing entries".into()));
    }
    Ok((ds.names, Tpdm::new(ds.values)?))
}
