//! Dense matrices on disk: CSV with a `# rows=m cols=n` header, or JSON
//! `{"rows": m, "cols": n, "data": [...]}` in row-major order.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixFile {
    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        MatrixFile { rows: m.nrows(), cols: m.ncols(), data }
    }

    pub fn to_matrix(&self) -> Result<DMatrix<f64>, CliError> {
        if self.rows.checked_mul(self.cols) != Some(self.data.len()) {
            return Err(CliError::Data(format!(
                "declared shape {}x{} needs {} values, found {}",
                self.rows,
                self.cols,
                self.rows.saturating_mul(self.cols),
                self.data.len()
            )));
        }
        if let Some(v) = self.data.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Data(format!("non-finite entry {v}")));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }

    pub fn parse_csv(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| CliError::Data("empty matrix file".into()))?;
        let (rows, cols) = parse_header(header)?;
        let body: String = lines.collect::<Vec<_>>().join("\n");
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .flexible(true)
            .from_reader(body.as_bytes());
        let mut data = Vec::with_capacity(rows * cols);
        for (k, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| CliError::Data(format!("csv row {}: {e}", k + 1)))?;
            if rec.iter().all(|f| f.is_empty()) {
                continue;
            }
            if rec.len() != cols {
                return Err(CliError::Data(format!("row {} has {} values, header says cols={cols}", k + 1, rec.len())));
            }
            for f in rec.iter() {
                data.push(f.parse::<f64>().map_err(|_| CliError::Data(format!("row {}: cannot parse '{f}'", k + 1)))?);
            }
        }
        Ok(MatrixFile { rows, cols, data })
    }

    /// Every entry printed with 17 significant digits, enough to round-trip.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# rows={} cols={}\n", self.rows, self.cols);
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|c| format!("{:.16e}", self.data[r * self.cols + c])).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) || text.trim_start().starts_with('{');
        let parsed = if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
        } else {
            Self::parse_csv(&text)
        };
        parsed.map_err(|e| match e {
            CliError::Data(msg) if !msg.starts_with(&path.display().to_string()) => {
                CliError::Data(format!("{}: {msg}", path.display()))
            }
            other => other,
        })
    }

    /// Writes JSON when the extension is `.json`, CSV otherwise.
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::to_string(self).map_err(|e| CliError::Data(e.to_string()))?
        } else {
            self.to_csv()
        };
        fs::write(path, text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

fn parse_header(line: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::Data(format!("expected '# rows=m cols=n' header, found '{line}'"));
    let rest = line.trim().strip_prefix('#').ok_or_else(bad)?;
    let (mut rows, mut cols) = (None, None);
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("rows", v)) => rows = v.parse().ok(),
            Some(("cols", v)) => cols = v.parse().ok(),
            _ => return Err(bad()),
        }
    }
    Ok((rows.ok_or_else(bad)?, cols.ok_or_else(bad)?))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    MatrixFile::read(path)?.to_matrix()
}

/// Reads a single row or a single column as a vector.
pub fn read_vector(path: &Path) -> Result<DVector<f64>, CliError> {
    let m = read_matrix(path)?;
    if m.ncols() == 1 || m.nrows() == 1 {
        Ok(DVector::from_iterator(m.len(), m.transpose().iter().copied()))
    } else {
        Err(CliError::Data(format!("{}: expected a vector, found a {}x{} matrix", path.display(), m.nrows(), m.ncols())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[0.1, -1.0 / 3.0, 1e-300, 2.0f64.sqrt(), 5e22, -0.0]);
        let back = MatrixFile::parse_csv(&MatrixFile::from_matrix(&m).to_csv()).unwrap().to_matrix().unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn header_shape_is_enforced() {
        assert!(MatrixFile::parse_csv("# rows=2 cols=2\n1,2\n3,4\n").unwrap().to_matrix().is_ok());
        assert!(MatrixFile::parse_csv("# rows=3 cols=2\n1,2\n3,4\n").unwrap().to_matrix().is_err());
        assert!(MatrixFile::parse_csv("# rows=2 cols=2\n1,2,3\n3,4\n").is_err());
        assert!(MatrixFile::parse_csv("1,2\n3,4\n").is_err());
        assert!(MatrixFile::parse_csv("# rows=1 cols=2\n1,x\n").is_err());
    }

    #[test]
    fn json_is_row_major() {
        let f: MatrixFile = serde_json::from_str(r#"{"rows":2,"cols":3,"data":[2,3,1,2,1,3]}"#).unwrap();
        let m = f.to_matrix().unwrap();
        assert_eq!(m[(0, 1)], 3.0);
        assert_eq!(m[(1, 2)], 3.0);
    }
}
