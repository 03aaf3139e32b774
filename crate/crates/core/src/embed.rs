//! Diffusion-maps coordinates of a set of feature columns (typically the
//! selected jointly smooth functions).

use faer::{Mat, MatRef};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{gaussian_kernel, median_bandwidth};
use crate::spectral::{fix_signs, top_eigenpairs, EigenOptions};

/// Median-heuristic factor used when no bandwidth is given.
pub const DEFAULT_BANDWIDTH_FACTOR: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct DiffusionEmbedding {
    coordinates: Mat<f64>,
    eigenvalues: Vec<f64>,
    bandwidth: f64,
}

impl DiffusionEmbedding {
    /// `N x m`; column `i` is `lambda_i psi_i`.
    pub fn coordinates(&self) -> &Mat<f64> {
        &self.coordinates
    }

    /// Non-trivial Markov eigenvalues, non-increasing, in (0, 1].
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn n(&self) -> usize {
        self.coordinates.nrows()
    }

    pub fn m(&self) -> usize {
        self.coordinates.ncols()
    }
}

/// Row-normalises a non-negative kernel into a random-walk matrix.
pub fn markov_matrix(kernel: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let degrees = degrees(kernel)?;
    Ok(Mat::from_fn(kernel.nrows(), kernel.ncols(), |i, j| {
        kernel[(i, j)] / degrees[i]
    }))
}

fn degrees(kernel: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let deg: Vec<f64> = (0..kernel.nrows())
        .map(|i| (0..kernel.ncols()).map(|j| kernel[(i, j)]).sum())
        .collect();
    if deg.iter().any(|&d| !d.is_finite() || d <= 0.0) {
        return Err(Error::data("kernel has a row with non-positive sum"));
    }
    Ok(deg)
}

/// Embeds the rows of `features` with the first `m` non-trivial diffusion
/// coordinates of a Gaussian kernel. Without a bandwidth, 0.3 times the median
/// pairwise distance is used.
pub fn diffusion_maps(features: MatRef<'_, f64>, m: usize, bandwidth: Option<f64>) -> Result<DiffusionEmbedding> {
    let n = features.nrows();
    if features.ncols() == 0 {
        return Err(Error::arg("need at least one feature column"));
    }
    if m == 0 || m + 1 >= n {
        return Err(Error::arg(format!("need 1 <= m < N - 1 (m = {m}, N = {n})")));
    }
    let data = Dataset::from_mat(features, "features")?;
    let bandwidth = match bandwidth {
        Some(b) => b,
        None => median_bandwidth(&data, DEFAULT_BANDWIDTH_FACTOR)?,
    };
    let mut sym = gaussian_kernel(&data, bandwidth)?.into_dense();
    let deg = degrees(sym.as_ref())?;
    let root: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
    for j in 0..n {
        for (i, v) in sym.col_as_slice_mut(j).iter_mut().enumerate() {
            *v /= root[i] * root[j];
        }
    }

    let (vecs, vals) = top_eigenpairs(&sym, m + 1, &EigenOptions::default())?;
    drop(sym);
    if let Some(bad) = vals[1..].iter().position(|&l| l.is_nan() || l <= 1e-12 * vals[0]) {
        return Err(Error::data(format!(
            "kernel is degenerate: only {bad} positive non-trivial diffusion eigenvalues (asked for {m})"
        )));
    }
    // psi = D^-1/2 v, scaled to unit norm under the stationary measure
    let total: f64 = deg.iter().sum::<f64>().sqrt();
    let mut psi = Mat::from_fn(n, m, |i, c| vecs[(i, c + 1)] * total / root[i]);
    fix_signs(&mut psi);
    let eigenvalues: Vec<f64> = vals[1..].iter().map(|l| l.min(1.0)).collect();
    for (c, l) in eigenvalues.iter().enumerate() {
        psi.col_as_slice_mut(c).iter_mut().for_each(|v| *v *= l);
    }
    Ok(DiffusionEmbedding {
        coordinates: psi,
        eigenvalues,
        bandwidth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{radius_cv, spearman};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn markov_rows_sum_to_one() {
        let data = Dataset::from_rows(&[vec![0.0], vec![0.3], vec![1.0], vec![1.1]], "x").unwrap();
        let k = gaussian_kernel(&data, 0.5).unwrap().into_dense();
        let p = markov_matrix(k.as_ref()).unwrap();
        for i in 0..4 {
            let s: f64 = (0..4).map(|j| p[(i, j)]).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn circle_stays_round() {
        let n = 400;
        let f = Mat::from_fn(n, 2, |i, j| {
            let t = std::f64::consts::TAU * i as f64 / n as f64;
            if j == 0 {
                t.cos()
            } else {
                t.sin()
            }
        });
        let e = diffusion_maps(f.as_ref(), 2, None).unwrap();
        let cv = radius_cv(e.coordinates().col_as_slice(0), e.coordinates().col_as_slice(1)).unwrap();
        assert!(cv < 0.05, "radius cv {cv}");
        assert!(e.eigenvalues().iter().all(|l| *l > 0.0 && *l <= 1.0));
    }

    #[test]
    fn monotone_line() {
        let n = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let f = Mat::from_fn(n, 1, |i, _| x[i]);
        let e = diffusion_maps(f.as_ref(), 1, None).unwrap();
        let rho = spearman(e.coordinates().col_as_slice(0), &x).unwrap();
        assert!(rho.abs() > 0.99, "rho {rho}");
    }

    #[test]
    fn constant_features_rejected() {
        let f = Mat::from_fn(20, 2, |_, j| j as f64);
        assert!(diffusion_maps(f.as_ref(), 2, None).is_err());
        assert!(diffusion_maps(f.as_ref(), 2, Some(1.0)).is_err());
    }

    #[test]
    fn argument_checks() {
        let f = Mat::from_fn(5, 1, |i, _| i as f64);
        assert!(diffusion_maps(f.as_ref(), 0, None).is_err());
        assert!(diffusion_maps(f.as_ref(), 4, None).is_err());
        assert!(diffusion_maps(Mat::<f64>::zeros(5, 0).as_ref(), 1, None).is_err());
    }
}
