//! Gaussian and continuous k-nearest-neighbour affinity matrices.
//!
//! The continuous k-NN kernel gives every point a local scale `r_i`, the
//! distance to its k-th nearest neighbour, and weights an edge as
//! `exp(-|x_i - x_j|^2 / (delta^2 r_i r_j))`. Edges exist only on the directed
//! k-NN graph; the result is symmetrised as `(K + K^T) / 2`, so a one-way edge
//! keeps half its weight.

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kdtree::{dist_sq, KdTree};
use crate::sparse::CsrMatrix;

/// Default multiple of the median pairwise distance used as Gaussian bandwidth.
pub const DEFAULT_BANDWIDTH_FACTOR: f64 = 0.3;
/// Above this many rows the median distance is estimated from a subsample.
pub const DEFAULT_MEDIAN_CAP: usize = 5000;

/// Resolved parameters of a constructed kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelParams {
    Gaussian {
        bandwidth: f64,
    },
    KnnContinuous {
        k: usize,
        delta: f64,
    },
    /// A user-supplied symmetric matrix. Cannot be extended to new points.
    Precomputed,
}

/// Recipe for building a kernel from a dataset; bandwidth may still be open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KernelSpec {
    /// Gaussian kernel; `bandwidth` wins over `factor` x median distance.
    Gaussian {
        #[serde(default = "default_factor")]
        factor: f64,
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    KnnContinuous {
        k: usize,
        delta: f64,
    },
}

fn default_factor() -> f64 {
    DEFAULT_BANDWIDTH_FACTOR
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Gaussian {
            factor: DEFAULT_BANDWIDTH_FACTOR,
            bandwidth: None,
        }
    }
}

impl KernelSpec {
    pub fn resolve(&self, data: &Dataset, seed: u64) -> Result<KernelParams> {
        match *self {
            KernelSpec::Gaussian { bandwidth: Some(b), .. } => {
                if !(b > 0.0 && b.is_finite()) {
                    return Err(Error::arg(format!("bandwidth must be positive, got {b}")));
                }
                Ok(KernelParams::Gaussian { bandwidth: b })
            }
            KernelSpec::Gaussian { factor, .. } => Ok(KernelParams::Gaussian {
                bandwidth: median_bandwidth_with(data, factor, DEFAULT_MEDIAN_CAP, seed)?,
            }),
            KernelSpec::KnnContinuous { k, delta } => Ok(KernelParams::KnnContinuous { k, delta }),
        }
    }
}

#[derive(Debug, Clone)]
pub enum KernelStorage {
    Dense(Mat<f64>),
    Sparse(CsrMatrix),
}

/// A symmetric `n x n` affinity matrix plus how it was made.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    storage: KernelStorage,
    params: KernelParams,
    /// Per-point k-NN scales; present for the continuous k-NN kind only.
    radii: Option<Vec<f64>>,
}

impl KernelMatrix {
    /// Wraps an arbitrary matrix, which must be square and exactly symmetric.
    pub fn precomputed(m: Mat<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::dim(format!(
                "kernel must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        for j in 0..n {
            for i in 0..n {
                if !m[(i, j)].is_finite() {
                    return Err(Error::data("kernel has non-finite entries"));
                }
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::data(format!("kernel not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self {
            storage: KernelStorage::Dense(m),
            params: KernelParams::Precomputed,
            radii: None,
        })
    }

    pub fn n(&self) -> usize {
        match &self.storage {
            KernelStorage::Dense(m) => m.nrows(),
            KernelStorage::Sparse(s) => s.n(),
        }
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn storage(&self) -> &KernelStorage {
        &self.storage
    }

    pub fn radii(&self) -> Option<&[f64]> {
        self.radii.as_deref()
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.storage, KernelStorage::Sparse(_))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            KernelStorage::Dense(m) => m[(i, j)],
            KernelStorage::Sparse(s) => s.get(i, j),
        }
    }

    /// Stored entries: `n^2` for dense storage.
    pub fn nnz(&self) -> usize {
        match &self.storage {
            KernelStorage::Dense(m) => m.nrows() * m.ncols(),
            KernelStorage::Sparse(s) => s.nnz(),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match &self.storage {
            KernelStorage::Dense(m) => m.clone(),
            KernelStorage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn into_dense(self) -> Mat<f64> {
        match self.storage {
            KernelStorage::Dense(m) => m,
            KernelStorage::Sparse(s) => s.to_dense(),
        }
    }

    pub fn max_asymmetry(&self) -> f64 {
        match &self.storage {
            KernelStorage::Dense(m) => {
                let n = m.nrows();
                (0..n)
                    .flat_map(|i| (0..i).map(move |j| (i, j)))
                    .map(|(i, j)| (m[(i, j)] - m[(j, i)]).abs())
                    .fold(0.0, f64::max)
            }
            KernelStorage::Sparse(s) => s.max_asymmetry(),
        }
    }

    /// Maximum absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        match &self.storage {
            KernelStorage::Dense(m) => (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
                .fold(0.0, f64::max),
            KernelStorage::Sparse(s) => s.norm_inf(),
        }
    }

    /// `y = K x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        match &self.storage {
            KernelStorage::Dense(m) => {
                let xv = faer::ColRef::from_slice(x);
                let prod = m * xv;
                y.copy_from_slice(prod.try_as_col_major().expect("contiguous").as_slice());
            }
            KernelStorage::Sparse(s) => s.matvec(x, y),
        }
    }

    pub fn heap_bytes(&self) -> usize {
        match &self.storage {
            KernelStorage::Dense(m) => m.nrows() * m.ncols() * 8,
            KernelStorage::Sparse(s) => s.heap_bytes(),
        }
    }
}

/// `factor` times the median pairwise Euclidean distance, with the default
/// subsampling cap and seed 0.
pub fn median_bandwidth(data: &Dataset, factor: f64) -> Result<f64> {
    median_bandwidth_with(data, factor, DEFAULT_MEDIAN_CAP, 0)
}

/// Median-heuristic bandwidth. Above `cap` rows the median is taken over a
/// uniformly subsampled set of `cap` rows drawn with `seed`.
pub fn median_bandwidth_with(data: &Dataset, factor: f64, cap: usize, seed: u64) -> Result<f64> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::arg(format!("bandwidth factor must be positive, got {factor}")));
    }
    if cap < 2 {
        return Err(Error::arg("median subsample cap must be at least 2"));
    }
    let rows: Vec<usize> = if data.n() > cap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, data.n(), cap).into_vec();
        idx.sort_unstable();
        idx
    } else {
        (0..data.n()).collect()
    };
    let mut dists: Vec<f64> = rows
        .par_iter()
        .enumerate()
        .flat_map_iter(|(a, &i)| {
            rows[a + 1..]
                .iter()
                .map(move |&j| dist_sq(data.row(i), data.row(j)).sqrt())
        })
        .collect();
    let median = median_in_place(&mut dists);
    if median <= 0.0 {
        return Err(Error::ZeroBandwidth);
    }
    Ok(factor * median)
}

fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    let mid = n / 2;
    let (_, &mut upper, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Dense Gaussian kernel `exp(-|x_i - x_j|^2 / (2 sigma^2))`.
pub fn gaussian_kernel(data: &Dataset, bandwidth: f64) -> Result<KernelMatrix> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::arg(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let n = data.n();
    let scale = -1.0 / (2.0 * bandwidth * bandwidth);
    let mut k = Mat::<f64>::zeros(n, n);
    k.as_mut().par_col_iter_mut().enumerate().for_each(|(j, col)| {
        let col = col
            .try_as_col_major_mut()
            .expect("owned matrix is column-major")
            .as_slice_mut();
        let xj = data.row(j);
        for (i, out) in col.iter_mut().enumerate() {
            // (a-b)^2 == (b-a)^2 bit for bit, so K[i,j] == K[j,i] exactly
            *out = if i == j {
                1.0
            } else {
                (scale * dist_sq(data.row(i), xj)).exp()
            };
        }
    });
    Ok(KernelMatrix {
        storage: KernelStorage::Dense(k),
        params: KernelParams::Gaussian { bandwidth },
        radii: None,
    })
}

/// Continuous k-NN edge weight between points at squared distance `d2`
/// with local scales `ri`, `rj`.
pub fn knn_weight(d2: f64, ri: f64, rj: f64, delta: f64) -> f64 {
    let denom = delta * delta * ri * rj;
    if d2 == 0.0 {
        1.0
    } else if denom > 0.0 {
        (-d2 / denom).exp()
    } else {
        0.0
    }
}

/// Sparse continuous k-nearest-neighbour kernel.
pub fn knn_kernel(data: &Dataset, k: usize, delta: f64) -> Result<KernelMatrix> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(Error::arg(format!("k must satisfy 1 <= k < N (k = {k}, N = {n})")));
    }
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::arg(format!("delta must be positive, got {delta}")));
    }
    let tree = KdTree::new(data.as_slice(), data.dim());
    let neighbors: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            tree.nearest(data.row(i), k, Some(i))
                .into_iter()
                .map(|nb| (nb.index, nb.dist_sq))
                .collect()
        })
        .collect();
    let radii: Vec<f64> = neighbors.iter().map(|nb| nb.last().expect("k >= 1").1.sqrt()).collect();

    // directed edge i -> j contributes w/2 to both (i, j) and (j, i)
    let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let mut r = Vec::with_capacity(2 * k + 1);
            r.push((i, 1.0));
            r
        })
        .collect();
    for (i, nb) in neighbors.iter().enumerate() {
        for &(j, d2) in nb {
            let half = 0.5 * knn_weight(d2, radii[i], radii[j], delta);
            rows[i].push((j, half));
            rows[j].push((i, half));
        }
    }
    let csr = CsrMatrix::from_row_entries(n, rows)?;
    Ok(KernelMatrix {
        storage: KernelStorage::Sparse(csr),
        params: KernelParams::KnnContinuous { k, delta },
        radii: Some(radii),
    })
}

/// Builds the kernel described by `params`.
pub fn build_kernel(data: &Dataset, params: &KernelParams) -> Result<KernelMatrix> {
    match *params {
        KernelParams::Gaussian { bandwidth } => gaussian_kernel(data, bandwidth),
        KernelParams::KnnContinuous { k, delta } => knn_kernel(data, k, delta),
        KernelParams::Precomputed => Err(Error::arg("a precomputed kernel cannot be rebuilt from data")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn line(points: &[f64]) -> Dataset {
        Dataset::from_column(points, "line").unwrap()
    }

    #[test]
    fn median_of_two_points() {
        let ds = Dataset::from_rows(&[vec![0.0, 0.0], vec![2.0, 0.0]], "v").unwrap();
        assert_abs_diff_eq!(median_bandwidth(&ds, 0.3).unwrap(), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn median_of_collinear_triple() {
        // distances {1, 1, 2}
        assert_abs_diff_eq!(
            median_bandwidth(&line(&[0.0, 1.0, 2.0]), 0.3).unwrap(),
            0.3,
            epsilon = 1e-15
        );
    }

    #[test]
    fn median_even_count_averages() {
        // distances {1, 3, 4, 2, 3, 1} -> sorted 1 1 2 3 3 4 -> (2 + 3) / 2
        assert_abs_diff_eq!(
            median_bandwidth(&line(&[0.0, 1.0, 4.0, 3.0]), 1.0).unwrap(),
            2.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn identical_points_have_zero_bandwidth() {
        let err = median_bandwidth(&line(&[1.0, 1.0, 1.0]), 0.3).unwrap_err();
        assert!(matches!(err, Error::ZeroBandwidth));
        assert_eq!(err.to_string(), "degenerate dataset: zero bandwidth");
    }

    #[test]
    fn subsampled_median_is_seeded() {
        let pts: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let ds = line(&pts);
        let a = median_bandwidth_with(&ds, 1.0, 20, 3).unwrap();
        let b = median_bandwidth_with(&ds, 1.0, 20, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_three_points() {
        let k = gaussian_kernel(&line(&[0.0, 1.0, 3.0]), 1.0).unwrap();
        assert_eq!(k.get(0, 0), 1.0);
        assert_abs_diff_eq!(k.get(0, 1), (-0.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.get(0, 2), (-4.5f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(k.get(1, 2), (-2.0f64).exp(), epsilon = 1e-15);
        assert_eq!(k.max_asymmetry(), 0.0);
    }

    #[test]
    fn gaussian_at_sigma_root_two() {
        let s = 0.7;
        let k = gaussian_kernel(&line(&[0.0, s * 2f64.sqrt()]), s).unwrap();
        assert_abs_diff_eq!(k.get(0, 1), (-1f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn gaussian_rejects_bad_bandwidth() {
        assert!(gaussian_kernel(&line(&[0.0, 1.0]), 0.0).is_err());
        assert!(gaussian_kernel(&line(&[0.0, 1.0]), f64::NAN).is_err());
    }

    #[test]
    fn knn_rejects_k_at_least_n() {
        assert!(knn_kernel(&line(&[0.0, 1.0, 2.0]), 3, 1.0).is_err());
        assert!(knn_kernel(&line(&[0.0, 1.0, 2.0]), 0, 1.0).is_err());
    }

    #[test]
    fn knn_all_neighbours_is_dense_and_symmetric() {
        let k = knn_kernel(&line(&[0.0, 0.4, 1.1, 1.5]), 3, 100.0).unwrap();
        assert_eq!(k.nnz(), 16);
        assert_eq!(k.max_asymmetry(), 0.0);
        for i in 0..4 {
            assert_eq!(k.get(i, i), 1.0);
        }
    }

    #[test]
    fn knn_isolated_point_decouples() {
        let mut pts: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        pts.push(100.0);
        let k = knn_kernel(&line(&pts), 3, 1.0).unwrap();
        let far = 10;
        assert!(k.get(far, far) > 0.0);
        for j in 0..far {
            assert!(k.get(far, j) < 1e-12, "weight {}", k.get(far, j));
        }
    }

    #[test]
    fn knn_duplicates_get_unit_weight() {
        let k = knn_kernel(&line(&[0.0, 0.0, 0.0, 1.0]), 2, 1.0).unwrap();
        assert_eq!(k.get(0, 1), 1.0);
    }
}
