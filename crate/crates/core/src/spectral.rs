//! Leading eigenpairs of kernel matrices and the truncated smoothness score.
//!
//! A [`SpectralBasis`] holds the `d` algebraically largest eigenpairs of one
//! kernel. The smoothness score of a vector `f` against that basis is
//! `|W^T f|^2`: the energy of `f` captured by the `d` smoothest directions.

use std::path::Path;

use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::kernels::{KernelMatrix, KernelParams};
use crate::lanczos::{lanczos_largest, LanczosConfig};

/// Upper limit of the default basis size.
pub const MAX_DEFAULT_D: usize = 2000;

/// Default number of eigenvectors per kernel: `N / 4`, at most 2000.
pub fn default_d(n: usize) -> usize {
    (n / 4).clamp(1, MAX_DEFAULT_D)
}

/// A real symmetric linear map, applied one vector at a time.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// Explicit matrix, when one is cheaply available.
    fn dense(&self) -> Option<MatRef<'_, f64>> {
        None
    }
}

impl SymmetricOperator for KernelMatrix {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn dense(&self) -> Option<MatRef<'_, f64>> {
        match self.storage() {
            crate::kernels::KernelStorage::Dense(m) => Some(m.as_ref()),
            crate::kernels::KernelStorage::Sparse(_) => None,
        }
    }
}

impl SymmetricOperator for Mat<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let prod = self * faer::ColRef::from_slice(x);
        y.copy_from_slice(prod.try_as_col_major().expect("contiguous").as_slice());
    }

    fn dense(&self) -> Option<MatRef<'_, f64>> {
        Some(self.as_ref())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    /// Lanczos for sparse operators and small `d`; a full dense
    /// decomposition when `d` is a large fraction of `N`.
    #[default]
    Auto,
    Lanczos,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenOptions {
    pub method: EigenMethod,
    /// Convergence threshold on Ritz residuals, relative to the operator norm.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov subspace size; defaults to `max(2d + 1, d + 32)`.
    pub krylov_dim: Option<usize>,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            method: EigenMethod::Auto,
            tol: 1e-10,
            max_restarts: 500,
            krylov_dim: None,
            seed: 0,
        }
    }
}

/// Below this size the dense path is always used under [`EigenMethod::Auto`].
const DENSE_ALWAYS_BELOW: usize = 128;

fn use_dense(op: &dyn SymmetricOperator, d: usize, method: EigenMethod) -> bool {
    match method {
        EigenMethod::Dense => true,
        EigenMethod::Lanczos => false,
        EigenMethod::Auto => op.dense().is_some() && (op.dim() <= DENSE_ALWAYS_BELOW || 10 * d >= op.dim()),
    }
}

/// The `d` algebraically largest eigenpairs of `op`, sorted descending, with
/// each eigenvector's largest-magnitude entry made positive.
pub fn top_eigenpairs(op: &dyn SymmetricOperator, d: usize, opts: &EigenOptions) -> Result<(Mat<f64>, Vec<f64>)> {
    let n = op.dim();
    if d == 0 || d >= n {
        return Err(Error::arg(format!("need 1 <= d < N (d = {d}, N = {n})")));
    }
    if opts.tol.is_nan() || opts.tol <= 0.0 {
        return Err(Error::arg("eigensolver tolerance must be positive"));
    }
    let (mut vecs, vals) = if use_dense(op, d, opts.method) {
        let owned;
        let a = match op.dense() {
            Some(a) => a,
            None => {
                owned = materialize(op);
                owned.as_ref()
            }
        };
        let eig = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Linalg(format!("dense eigendecomposition: {e:?}")))?;
        let s = eig.S().column_vector();
        let u = eig.U();
        let vals: Vec<f64> = (0..d).map(|c| s[n - 1 - c]).collect();
        (Mat::from_fn(n, d, |i, c| u[(i, n - 1 - c)]), vals)
    } else {
        let cfg = LanczosConfig {
            nev: d,
            krylov_dim: opts.krylov_dim.unwrap_or((2 * d + 1).max(d + 32)),
            tol: opts.tol,
            max_restarts: opts.max_restarts,
            seed: opts.seed,
        };
        lanczos_largest(op, &cfg)?
    };
    fix_signs(&mut vecs);
    Ok((vecs, vals))
}

fn materialize(op: &dyn SymmetricOperator) -> Mat<f64> {
    let n = op.dim();
    let mut m = Mat::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut y = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply(&e, &mut y);
        m.col_as_slice_mut(j).copy_from_slice(&y);
        e[j] = 0.0;
    }
    m
}

/// Flips each column so its largest-magnitude entry (first on ties) is positive.
pub fn fix_signs(m: &mut Mat<f64>) {
    for c in 0..m.ncols() {
        let col = m.col_as_slice_mut(c);
        let mut best = 0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.iter_mut().for_each(|v| *v = -*v);
        }
    }
}

/// Top-`d` orthonormal eigenvectors and eigenvalues of one kernel.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    vectors: Mat<f64>,
    eigenvalues: Vec<f64>,
    params: KernelParams,
}

impl SpectralBasis {
    /// Wraps precomputed eigenpairs. Columns must be orthonormal to 1e-8 and
    /// eigenvalues sorted non-increasing.
    pub fn new(vectors: Mat<f64>, eigenvalues: Vec<f64>, params: KernelParams) -> Result<Self> {
        if vectors.ncols() != eigenvalues.len() {
            return Err(Error::dim(format!(
                "{} eigenvectors but {} eigenvalues",
                vectors.ncols(),
                eigenvalues.len()
            )));
        }
        if vectors.ncols() == 0 || vectors.ncols() > vectors.nrows() {
            return Err(Error::dim(format!(
                "basis must have 1..=N columns, got {}x{}",
                vectors.nrows(),
                vectors.ncols()
            )));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::data("eigenvalues must be sorted non-increasing"));
        }
        let basis = Self {
            vectors,
            eigenvalues,
            params,
        };
        let dev = basis.orthonormality_error();
        if dev > 1e-8 {
            return Err(Error::data(format!(
                "basis columns not orthonormal (deviation {dev:e})"
            )));
        }
        Ok(basis)
    }

    /// Bypasses validation; callers guarantee orthonormal columns.
    pub(crate) fn from_parts(vectors: Mat<f64>, eigenvalues: Vec<f64>, params: KernelParams) -> Self {
        Self {
            vectors,
            eigenvalues,
            params,
        }
    }

    pub fn n(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn d(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> MatRef<'_, f64> {
        self.vectors.as_ref()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Keeps the leading `d` columns.
    pub fn truncated(&self, d: usize) -> Self {
        let d = d.min(self.d());
        Self {
            vectors: self.vectors.as_ref().subcols(0, d).to_owned(),
            eigenvalues: self.eigenvalues[..d].to_vec(),
            params: self.params,
        }
    }

    /// Same basis with rows reordered: row `i` of the result is row `perm[i]`.
    pub fn permuted_rows(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n() {
            return Err(Error::dim("permutation length differs from N"));
        }
        Ok(Self {
            vectors: Mat::from_fn(self.n(), self.d(), |i, j| self.vectors[(perm[i], j)]),
            eigenvalues: self.eigenvalues.clone(),
            params: self.params,
        })
    }

    /// `max |W^T W - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        let d = self.d();
        let mut worst = 0.0f64;
        for j in 0..d {
            for i in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - target).abs());
            }
        }
        worst
    }

    /// Per-column residual norms `|K w_i - lambda_i w_i|`.
    pub fn residuals(&self, op: &dyn SymmetricOperator) -> Result<Vec<f64>> {
        if op.dim() != self.n() {
            return Err(Error::dim("operator size differs from basis"));
        }
        let mut y = vec![0.0; self.n()];
        Ok((0..self.d())
            .map(|c| {
                let w = self.vectors.col_as_slice(c);
                op.apply(w, &mut y);
                y.iter()
                    .zip(w)
                    .map(|(a, b)| {
                        let r = a - self.eigenvalues[c] * b;
                        r * r
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }

    /// Writes `eigenvalues.csv`, `vectors.csv` and `params.json` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        io::write_vector_csv(dir.join("eigenvalues.csv"), &self.eigenvalues)?;
        io::write_matrix_csv(dir.join("vectors.csv"), self.vectors.as_ref())?;
        io::write_json(dir.join("params.json"), &self.params)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let eigenvalues = io::read_vector_csv(dir.join("eigenvalues.csv"))?;
        let vectors = io::read_matrix_csv(dir.join("vectors.csv"))?;
        let params = io::read_json(dir.join("params.json"))?;
        Self::new(vectors, eigenvalues, params)
    }
}

/// The `d` leading eigenpairs of `kernel`, with default solver options and
/// the given relative residual tolerance.
pub fn top_eigenbasis(kernel: &KernelMatrix, d: usize, tol: f64) -> Result<SpectralBasis> {
    top_eigenbasis_with(
        kernel,
        d,
        &EigenOptions {
            tol,
            ..EigenOptions::default()
        },
    )
}

pub fn top_eigenbasis_with(kernel: &KernelMatrix, d: usize, opts: &EigenOptions) -> Result<SpectralBasis> {
    let (vectors, eigenvalues) = top_eigenpairs(kernel, d, opts)?;
    if let Some(&last) = eigenvalues.last() {
        if last <= 0.0 {
            log::warn!(
                "selected eigenvalue {last:e} is not positive; kernel {:?} is far from PSD",
                kernel.params()
            );
        }
    }
    Ok(SpectralBasis::from_parts(vectors, eigenvalues, *kernel.params()))
}

fn check_len(basis: &SpectralBasis, f: &[f64]) -> Result<()> {
    if f.len() != basis.n() {
        return Err(Error::dim(format!(
            "function has {} samples, basis has {} rows",
            f.len(),
            basis.n()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("function has non-finite samples"));
    }
    Ok(())
}

/// `|W^T f|^2`, the d-truncated smoothness score.
pub fn smoothness_score(basis: &SpectralBasis, f: &[f64]) -> Result<f64> {
    check_len(basis, f)?;
    let proj = basis.vectors().transpose() * faer::ColRef::from_slice(f);
    Ok(proj.squared_norm_l2())
}

/// Whether `f` lies in the span of the basis, i.e. its score equals its
/// squared norm within relative tolerance `tol`.
pub fn is_d_smooth(basis: &SpectralBasis, f: &[f64], tol: f64) -> Result<bool> {
    check_len(basis, f)?;
    let norm_sq: f64 = f.iter().map(|v| v * v).sum();
    if norm_sq == 0.0 {
        return Err(Error::arg("smoothness of the zero vector is undefined"));
    }
    let score = smoothness_score(basis, f)?;
    Ok((score / norm_sq - 1.0).abs() <= tol)
}
