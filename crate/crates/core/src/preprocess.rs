//! Principal-component projection and delay embedding of feature rows.

use faer::Mat;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::spectral::fix_signs;

/// Affine map onto the leading principal axes of a dataset.
#[derive(Debug, Clone)]
pub struct PcaMap {
    mean: Vec<f64>,
    components: Mat<f64>,
    explained: Vec<f64>,
}

impl PcaMap {
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `p x q`, orthonormal columns.
    pub fn components(&self) -> &Mat<f64> {
        &self.components
    }

    /// Singular values of the centred data along each component.
    pub fn explained(&self) -> &[f64] {
        &self.explained
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.ncols()
    }

    /// `(x - mean) * components` for every row.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        let p = self.input_dim();
        if data.dim() != p {
            return Err(Error::dim(format!(
                "PCA map expects {p} columns, data has {}",
                data.dim()
            )));
        }
        let q = self.output_dim();
        let mut out = vec![0.0; data.n() * q];
        let mut centred = vec![0.0; p];
        for (row, dst) in data.rows().zip(out.chunks_exact_mut(q)) {
            for ((c, x), m) in centred.iter_mut().zip(row).zip(&self.mean) {
                *c = x - m;
            }
            for (k, d) in dst.iter_mut().enumerate() {
                *d = self
                    .components
                    .col_as_slice(k)
                    .iter()
                    .zip(&centred)
                    .map(|(a, b)| a * b)
                    .sum();
            }
        }
        Dataset::query(out, data.n(), q, data.view_id())
    }

    /// Maps projected coordinates back to the input space.
    pub fn reconstruct(&self, coords: &Dataset) -> Result<Dataset> {
        let q = self.output_dim();
        if coords.dim() != q {
            return Err(Error::dim(format!(
                "expected {q} coordinates per row, got {}",
                coords.dim()
            )));
        }
        let p = self.input_dim();
        let mut out = vec![0.0; coords.n() * p];
        for (row, dst) in coords.rows().zip(out.chunks_exact_mut(p)) {
            dst.copy_from_slice(&self.mean);
            for (k, &c) in row.iter().enumerate() {
                for (d, v) in dst.iter_mut().zip(self.components.col_as_slice(k)) {
                    *d += c * v;
                }
            }
        }
        Dataset::query(out, coords.n(), p, coords.view_id())
    }
}

/// Fits the first `q` principal components of `data` from a thin SVD of the
/// centred rows. Component signs follow the same convention as eigenvectors.
pub fn pca_fit(data: &Dataset, q: usize) -> Result<PcaMap> {
    let (n, p) = (data.n(), data.dim());
    if q == 0 || q > n.min(p) {
        return Err(Error::arg(format!(
            "number of components must satisfy 1 <= q <= min(N, p) = {} (got {q})",
            n.min(p)
        )));
    }
    let mut mean = vec![0.0; p];
    for row in data.rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = Mat::from_fn(n, p, |i, j| data.row(i)[j] - mean[j]);
    let svd = centred
        .thin_svd()
        .map_err(|e| Error::Linalg(format!("PCA singular value decomposition: {e:?}")))?;
    let mut components = svd.V().subcols(0, q).to_owned();
    fix_signs(&mut components);
    let s = svd.S().column_vector();
    let explained = (0..q).map(|i| s[i]).collect();
    Ok(PcaMap {
        mean,
        components,
        explained,
    })
}

/// Shorthand for `pca_fit(data, q)?.apply(data)`.
pub fn pca_apply(map: &PcaMap, data: &Dataset) -> Result<Dataset> {
    map.apply(data)
}

/// Concatenates each row with the `horizon` rows that follow it. The last
/// `horizon` rows have no full window and are dropped.
pub fn delay_embed(data: &Dataset, horizon: usize) -> Result<Dataset> {
    let (n, p) = (data.n(), data.dim());
    if horizon == 0 {
        return Err(Error::arg("delay horizon must be at least 1"));
    }
    if horizon >= n {
        return Err(Error::arg(format!("delay horizon {horizon} needs more than {n} rows")));
    }
    let rows = n - horizon;
    let width = p * (horizon + 1);
    let src = data.as_slice();
    let mut out = Vec::with_capacity(rows * width);
    for i in 0..rows {
        out.extend_from_slice(&src[i * p..i * p + width]);
    }
    Dataset::query(out, rows, width, data.view_id())
}
