//! Plain-text artifact I/O: 17-significant-digit CSV matrices and JSON.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use faer::{Mat, MatRef};
use serde::{de::DeserializeOwned, Serialize};

use crate::data::parse_csv_rows;
use crate::error::{Error, Result};

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_rows_csv<'a, I>(path: impl AsRef<Path>, rows: I, header: Option<&[String]>) -> Result<()>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    if let Some(h) = header {
        writeln!(out, "{}", h.join(","))?;
    }
    for row in rows {
        write_row(&mut out, row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_row<W: Write>(out: &mut W, row: &[f64]) -> std::io::Result<()> {
    let mut first = true;
    for &v in row {
        if !first {
            out.write_all(b",")?;
        }
        first = false;
        out.write_all(fmt_f64(v).as_bytes())?;
    }
    out.write_all(b"\n")
}

pub fn write_matrix_csv(path: impl AsRef<Path>, m: MatRef<'_, f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    let mut row = vec![0.0; m.ncols()];
    for i in 0..m.nrows() {
        for (j, r) in row.iter_mut().enumerate() {
            *r = m[(i, j)];
        }
        write_row(&mut out, &row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<Mat<f64>> {
    let rows = parse_csv_rows(File::open(path.as_ref())?)?;
    if rows.is_empty() {
        return Err(Error::data(format!("{}: no rows", path.as_ref().display())));
    }
    let p = rows[0].len();
    Ok(Mat::from_fn(rows.len(), p, |i, j| rows[i][j]))
}

pub fn write_vector_csv(path: impl AsRef<Path>, v: &[f64]) -> Result<()> {
    write_rows_csv(path, v.chunks(1), None)
}

pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() != 1 {
        return Err(Error::dim(format!("expected one column, found {}", m.ncols())));
    }
    Ok((0..m.nrows()).map(|i| m[(i, 0)]).collect())
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let text = std::fs::read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn seventeen_digits_round_trip(v in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO) {
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = Mat::from_fn(4, 3, |i, j| ((i * 3 + j) as f64).sin() / 7.0);
        write_matrix_csv(&path, m.as_ref()).unwrap();
        let back = read_matrix_csv(&path).unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(back[(i, j)].to_bits(), m[(i, j)].to_bits());
            }
        }
    }
}
