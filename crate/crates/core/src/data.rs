//! Row-aligned observation matrices.
//!
//! A [`Dataset`] is one view of the data: `n` observations of a `p`-dimensional
//! ambient vector, stored row-major. Row `i` of every dataset in a multi-view
//! collection refers to the same underlying sample.

use std::io::Read;
use std::path::Path;

use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    values: Vec<f64>,
    n: usize,
    p: usize,
    view_id: String,
}

impl Dataset {
    /// Builds a training dataset from row-major values. Requires at least two
    /// rows, at least one column and finite entries.
    pub fn new(values: Vec<f64>, n: usize, p: usize, view_id: impl Into<String>) -> Result<Self> {
        if n < 2 {
            return Err(Error::data(format!("dataset needs at least 2 rows, got {n}")));
        }
        Self::query(values, n, p, view_id)
    }

    /// Like [`Dataset::new`] but accepts a single row. Used for out-of-sample
    /// query batches.
    pub fn query(values: Vec<f64>, n: usize, p: usize, view_id: impl Into<String>) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::data(format!("empty dataset ({n}x{p})")));
        }
        if values.len() != n * p {
            return Err(Error::dim(format!(
                "{} values cannot form a {n}x{p} dataset",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "non-finite entry at row {}, column {}",
                pos / p,
                pos % p
            )));
        }
        Ok(Self {
            values,
            n,
            p,
            view_id: view_id.into(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], view_id: impl Into<String>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != p) {
            return Err(Error::dim(format!(
                "row {bad} has {} columns, expected {p}",
                rows[bad].len()
            )));
        }
        let values = rows.iter().flatten().copied().collect();
        Self::new(values, rows.len(), p, view_id)
    }

    pub fn from_mat(mat: faer::MatRef<'_, f64>, view_id: impl Into<String>) -> Result<Self> {
        let (n, p) = (mat.nrows(), mat.ncols());
        let mut values = Vec::with_capacity(n * p);
        for i in 0..n {
            for j in 0..p {
                values.push(mat[(i, j)]);
            }
        }
        Self::new(values, n, p, view_id)
    }

    /// Single-column dataset.
    pub fn from_column(col: &[f64], view_id: impl Into<String>) -> Result<Self> {
        Self::new(col.to_vec(), col.len(), 1, view_id)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn view_id(&self) -> &str {
        &self.view_id
    }

    pub fn with_view_id(mut self, id: impl Into<String>) -> Self {
        self.view_id = id.into();
        self
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.p)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_mat(&self) -> Mat<f64> {
        Mat::from_fn(self.n, self.p, |i, j| self.values[i * self.p + j])
    }

    /// New dataset holding rows `indices` in that order. Repeats are allowed.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.p);
        for &i in indices {
            if i >= self.n {
                return Err(Error::arg(format!("row index {i} out of range (n = {})", self.n)));
            }
            values.extend_from_slice(self.row(i));
        }
        Self::query(values, indices.len(), self.p, self.view_id.clone())
    }

    /// Splits off the last `tail` rows: `(head, tail)`.
    pub fn split_tail(&self, tail: usize) -> Result<(Self, Self)> {
        if tail == 0 || tail >= self.n {
            return Err(Error::arg(format!("cannot split {tail} rows from {}", self.n)));
        }
        let head_idx: Vec<usize> = (0..self.n - tail).collect();
        let tail_idx: Vec<usize> = (self.n - tail..self.n).collect();
        Ok((self.select_rows(&head_idx)?, self.select_rows(&tail_idx)?))
    }

    pub fn read_csv(path: impl AsRef<Path>, view_id: impl Into<String>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::parse_csv(file, view_id)
    }

    /// Parses comma-separated rows of floats. A first line containing any
    /// non-numeric field is treated as a header and skipped.
    pub fn parse_csv<R: Read>(reader: R, view_id: impl Into<String>) -> Result<Self> {
        let rows = parse_csv_rows(reader)?;
        if rows.is_empty() {
            return Err(Error::data("no data rows"));
        }
        Self::from_rows(&rows, view_id)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_rows_csv(path, self.rows(), None)
    }
}

/// Parses CSV text into rows of floats, skipping an auto-detected header.
/// Ragged rows are reported, not padded.
pub fn parse_csv_rows<R: Read>(reader: R) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(idx + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(Error::Parse {
                            line,
                            message: format!("expected {} fields, found {}", first.len(), row.len()),
                        });
                    }
                }
                rows.push(row);
            }
            Err(_) if rows.is_empty() && idx == 0 => {
                // header line
            }
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: format!("non-numeric field: {e}"),
                })
            }
        }
    }
    Ok(rows)
}

/// Parses one streamed CSV line into floats.
pub fn parse_csv_line(line: &str) -> Result<Vec<f64>> {
    let line = line.trim();
    if line.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "empty line".into(),
        });
    }
    line.split(',')
        .enumerate()
        .map(|(j, field)| {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                line: 1,
                message: format!("field {} is not a number: {:?}", j + 1, field.trim()),
            })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line: 1,
                    message: format!("field {} is not finite", j + 1),
                })
            }
        })
        .collect()
}
