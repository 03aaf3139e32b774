//! Jointly smooth functions: the dominant left singular vectors of the
//! concatenated per-view eigenbases, their per-view smoothness scores, and the
//! thresholds used to decide how many of them are significant.

use std::path::Path;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::io;
use crate::kernels::{build_kernel, KernelParams};
use crate::spectral::{top_eigenbasis_with, top_eigenpairs, EigenOptions, SpectralBasis};

/// Upper limit on the default number of retained functions.
pub const MAX_DEFAULT_FUNCTIONS: usize = 512;

/// Singular values at or below this fraction of the largest are treated as zero.
pub const PINV_CUTOFF: f64 = 1e-12;

/// Default number of jackstraw permutations.
pub const DEFAULT_PERMUTATIONS: usize = 5;

/// Default count of columns kept before thresholding: `min(2d, 512)`.
pub fn default_max_functions(d: usize) -> usize {
    (2 * d).min(MAX_DEFAULT_FUNCTIONS)
}

/// Jointly smooth functions of `K` aligned views.
#[derive(Debug, Clone, PartialEq)]
pub struct JsfModel {
    functions: Mat<f64>,
    singular_values: Vec<f64>,
    scores: Vec<Vec<f64>>,
    coefficients: Vec<Mat<f64>>,
    kernels: Vec<KernelParams>,
    m: usize,
    threshold: Option<f64>,
}

/// JSON side of a saved [`JsfModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub views: usize,
    pub n: usize,
    pub d: usize,
    pub max_functions: usize,
    pub m: usize,
    pub threshold: Option<f64>,
    pub singular_values: Vec<f64>,
    pub kernels: Vec<KernelParams>,
}

impl JsfModel {
    fn from_functions(functions: Mat<f64>, singular_values: Vec<f64>, bases: &[&SpectralBasis]) -> Self {
        let par = faer::get_global_parallelism();
        let cols = functions.ncols();
        let mut coefficients = Vec::with_capacity(bases.len());
        let mut scores = Vec::with_capacity(bases.len());
        for b in bases {
            let mut alpha = Mat::<f64>::zeros(b.d(), cols);
            matmul(
                alpha.as_mut(),
                Accum::Replace,
                b.vectors().transpose(),
                functions.as_ref(),
                1.0,
                par,
            );
            scores.push((0..cols).map(|c| alpha.col(c).squared_norm_l2()).collect());
            coefficients.push(alpha);
        }
        Self {
            functions,
            singular_values,
            scores,
            coefficients,
            kernels: bases.iter().map(|b| *b.params()).collect(),
            m: 0,
            threshold: None,
        }
    }

    /// `U`, one function per column.
    pub fn functions(&self) -> MatRef<'_, f64> {
        self.functions.as_ref()
    }

    pub fn function(&self, m: usize) -> &[f64] {
        self.functions.col_as_slice(m)
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// `|W_k^T u_i|^2` for view `k`.
    pub fn scores(&self, view: usize) -> &[f64] {
        &self.scores[view]
    }

    /// Per-column minimum of the scores over views.
    pub fn min_scores(&self) -> Vec<f64> {
        (0..self.max_functions())
            .map(|i| self.scores.iter().map(|s| s[i]).fold(f64::INFINITY, f64::min))
            .collect()
    }

    /// `alpha_k = W_k^T U`, `d x M_max`.
    pub fn coefficients(&self, view: usize) -> MatRef<'_, f64> {
        self.coefficients[view].as_ref()
    }

    pub fn kernel_params(&self) -> &[KernelParams] {
        &self.kernels
    }

    pub fn views(&self) -> usize {
        self.scores.len()
    }

    pub fn n(&self) -> usize {
        self.functions.nrows()
    }

    pub fn d(&self) -> usize {
        self.coefficients.first().map_or(0, Mat::nrows)
    }

    pub fn max_functions(&self) -> usize {
        self.functions.ncols()
    }

    /// Number of selected functions; zero until [`select_m`] runs.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    /// Sets `M` directly, bypassing thresholding.
    pub fn set_m(&mut self, m: usize) -> Result<()> {
        if m > self.max_functions() {
            return Err(Error::arg(format!(
                "M = {m} exceeds the {} retained functions",
                self.max_functions()
            )));
        }
        self.m = m;
        Ok(())
    }

    /// Keeps the leading `count` columns.
    pub fn truncated(&self, count: usize) -> Self {
        let count = count.min(self.max_functions());
        Self {
            functions: self.functions.as_ref().subcols(0, count).to_owned(),
            singular_values: self.singular_values[..count].to_vec(),
            scores: self.scores.iter().map(|s| s[..count].to_vec()).collect(),
            coefficients: self
                .coefficients
                .iter()
                .map(|a| a.as_ref().subcols(0, count).to_owned())
                .collect(),
            kernels: self.kernels.clone(),
            m: self.m.min(count),
            threshold: self.threshold,
        }
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            views: self.views(),
            n: self.n(),
            d: self.d(),
            max_functions: self.max_functions(),
            m: self.m,
            threshold: self.threshold,
            singular_values: self.singular_values.clone(),
            kernels: self.kernels.clone(),
        }
    }

    /// Writes `U.csv`, `alpha_<k>.csv`, `scores.json` and `manifest.json`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        io::write_matrix_csv(dir.join("U.csv"), self.functions.as_ref())?;
        for (k, a) in self.coefficients.iter().enumerate() {
            io::write_matrix_csv(dir.join(format!("alpha_{k}.csv")), a.as_ref())?;
        }
        io::write_json(dir.join("scores.json"), &self.scores)?;
        io::write_json(dir.join("manifest.json"), &self.manifest())?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let manifest: Manifest = io::read_json(dir.join("manifest.json"))?;
        let scores: Vec<Vec<f64>> = io::read_json(dir.join("scores.json"))?;
        let functions = io::read_matrix_csv(dir.join("U.csv"))?;
        let coefficients = (0..manifest.views)
            .map(|k| io::read_matrix_csv(dir.join(format!("alpha_{k}.csv"))))
            .collect::<Result<Vec<_>>>()?;
        let cols = manifest.max_functions;
        let consistent = functions.nrows() == manifest.n
            && functions.ncols() == cols
            && manifest.singular_values.len() == cols
            && manifest.kernels.len() == manifest.views
            && manifest.m <= cols
            && scores.len() == manifest.views
            && scores.iter().all(|s| s.len() == cols)
            && coefficients
                .iter()
                .all(|a| a.nrows() == manifest.d && a.ncols() == cols);
        if !consistent {
            return Err(Error::data(format!(
                "model files in {} disagree with the manifest",
                dir.display()
            )));
        }
        Ok(Self {
            functions,
            singular_values: manifest.singular_values,
            scores,
            coefficients,
            kernels: manifest.kernels,
            m: manifest.m,
            threshold: manifest.threshold,
        })
    }
}

fn common_d(bases: &[&SpectralBasis]) -> Result<usize> {
    let n = bases[0].n();
    if let Some(b) = bases.iter().find(|b| b.n() != n) {
        return Err(Error::dim(format!(
            "views have different sample counts ({n} and {})",
            b.n()
        )));
    }
    let d = bases.iter().map(|b| b.d()).min().unwrap_or(0);
    if d == 0 {
        return Err(Error::arg("basis size d must be positive"));
    }
    if bases.iter().any(|b| b.d() != d) {
        log::warn!("views have different basis sizes; truncating all to d = {d}");
    }
    Ok(d)
}

/// Two-view jointly smooth functions with the default `M_max`.
pub fn jsf_two_view(basis_x: &SpectralBasis, basis_y: &SpectralBasis) -> Result<JsfModel> {
    let d = common_d(&[basis_x, basis_y])?;
    jsf_two_view_with(basis_x, basis_y, default_max_functions(d))
}

/// Two-view jointly smooth functions built from the SVD of `W_x^T W_y`.
///
/// With `W_x^T W_y = Q Γ R^T`, the left singular vectors of `[W_x W_y]` are
/// `(W_x q_i ± W_y r_i) / sqrt(2 (1 ± γ_i))`. The `+` block comes first in
/// descending `γ`, then the `-` block in ascending `γ`. Columns whose
/// singular value falls below the pseudo-inverse cutoff are dropped.
pub fn jsf_two_view_with(basis_x: &SpectralBasis, basis_y: &SpectralBasis, max_functions: usize) -> Result<JsfModel> {
    let d = common_d(&[basis_x, basis_y])?;
    if max_functions == 0 {
        return Err(Error::arg("number of retained functions must be positive"));
    }
    let (bx, by);
    let (x, y) = if basis_x.d() != d || basis_y.d() != d {
        bx = basis_x.truncated(d);
        by = basis_y.truncated(d);
        (&bx, &by)
    } else {
        (basis_x, basis_y)
    };
    let (q, gamma, r) = principal_vectors(x.vectors(), y.vectors())?;

    // (index into Γ, sign) for each output column, descending singular value
    let mut order: Vec<(usize, f64)> = (0..d).map(|i| (i, 1.0)).collect();
    order.extend((0..d).rev().map(|i| (i, -1.0)));
    let sigma: Vec<f64> = order
        .iter()
        .map(|&(i, s)| (1.0 + s * gamma[i]).max(0.0).sqrt())
        .collect();
    let candidates = (2 * d).min(max_functions);

    let par = faer::get_global_parallelism();
    let n = x.n();
    let qk = Mat::from_fn(d, candidates, |i, c| q[(i, order[c].0)]);
    let rk = Mat::from_fn(d, candidates, |i, c| order[c].1 * r[(i, order[c].0)]);
    let mut u = Mat::<f64>::zeros(n, candidates);
    matmul(u.as_mut(), Accum::Replace, x.vectors(), qk.as_ref(), 1.0, par);
    matmul(u.as_mut(), Accum::Add, y.vectors(), rk.as_ref(), 1.0, par);
    // sqrt(1 - γ) cancels as γ -> 1; the column norm resolves σ down to round-off
    let sv: Vec<f64> = (0..candidates)
        .map(|c| {
            if order[c].1 > 0.0 {
                sigma[c]
            } else {
                u.col(c).norm_l2() / std::f64::consts::SQRT_2
            }
        })
        .collect();
    let cutoff = PINV_CUTOFF * sigma[0];
    let kept = sv.iter().take_while(|&&s| s > cutoff).count();
    let mut u = if kept < candidates {
        u.as_ref().subcols(0, kept).to_owned()
    } else {
        u
    };
    let sv = sv[..kept].to_vec();
    for (c, s) in sv.iter().enumerate() {
        let scale = 1.0 / (std::f64::consts::SQRT_2 * s);
        u.col_as_slice_mut(c).iter_mut().for_each(|v| *v *= scale);
    }
    crate::spectral::fix_signs(&mut u);
    Ok(JsfModel::from_functions(u, sv, &[x, y]))
}

/// `(Q, γ, R)` with `A^T B = Q diag(γ) R^T`, `γ` descending and clamped to `[0, 1]`.
pub fn principal_vectors(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<(Mat<f64>, Vec<f64>, Mat<f64>)> {
    let c = a.transpose() * b;
    let svd = c
        .thin_svd()
        .map_err(|e| Error::Linalg(format!("SVD of the basis cross product: {e:?}")))?;
    let s = svd.S().column_vector();
    let gamma = (0..s.nrows()).map(|i| s[i].clamp(0.0, 1.0)).collect();
    Ok((svd.U().to_owned(), gamma, svd.V().to_owned()))
}

/// Cosines of the principal angles between the spans of two orthonormal bases.
pub fn principal_cosines(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<Vec<f64>> {
    let c = a.transpose() * b;
    let s = c
        .singular_values()
        .map_err(|e| Error::Linalg(format!("singular values: {e:?}")))?;
    Ok(s.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

/// Jointly smooth functions of `K >= 2` views with the default `M_max`.
pub fn jsf_multi_view(bases: &[SpectralBasis]) -> Result<JsfModel> {
    jsf_multi_view_with(bases, None, &EigenOptions::default())
}

/// Leading left singular vectors of `W = [W_1 ... W_K]`.
///
/// Two views go through [`jsf_two_view_with`]. Otherwise the Gram matrix
/// `W^T W` (size `Kd`) is eigendecomposed and `u = W v / σ`.
pub fn jsf_multi_view_with(
    bases: &[SpectralBasis],
    max_functions: Option<usize>,
    opts: &EigenOptions,
) -> Result<JsfModel> {
    if bases.len() < 2 {
        return Err(Error::arg(format!("need at least two views, got {}", bases.len())));
    }
    let refs: Vec<&SpectralBasis> = bases.iter().collect();
    let d = common_d(&refs)?;
    let max_functions = max_functions.unwrap_or_else(|| default_max_functions(d));
    if bases.len() == 2 {
        return jsf_two_view_with(&bases[0], &bases[1], max_functions);
    }
    if max_functions == 0 {
        return Err(Error::arg("number of retained functions must be positive"));
    }
    let truncated: Vec<SpectralBasis> = bases.iter().map(|b| b.truncated(d)).collect();
    let k = truncated.len();
    let n = truncated[0].n();
    let kd = k * d;
    let mut w = Mat::<f64>::zeros(n, kd);
    for (v, b) in truncated.iter().enumerate() {
        w.as_mut().subcols_mut(v * d, d).copy_from(b.vectors());
    }
    let gram = w.transpose() * &w;
    let cols = max_functions.min(kd - 1).min(n);
    let (vecs, vals) = top_eigenpairs(&gram, cols, opts)?;
    let u = w.as_ref() * vecs.as_ref();
    // |W v| = σ without the cancellation of sqrt(λ) near zero
    let sigma: Vec<f64> = (0..cols).map(|c| u.col(c).norm_l2()).collect();
    let top = vals[0].max(0.0).sqrt();
    let kept = sigma.iter().take_while(|&&s| s > PINV_CUTOFF * top).count();
    let mut u = u.as_ref().subcols(0, kept).to_owned();
    for (c, s) in sigma[..kept].iter().enumerate() {
        u.col_as_slice_mut(c).iter_mut().for_each(|v| *v /= s);
    }
    crate::spectral::fix_signs(&mut u);
    let refs: Vec<&SpectralBasis> = truncated.iter().collect();
    Ok(JsfModel::from_functions(u, sigma[..kept].to_vec(), &refs))
}

/// Closed-form threshold: the expected top score of a function smooth on one
/// view against an unrelated `d`-dimensional subspace, averaged with 1.
pub fn analytic_threshold(n: usize, d: usize) -> Result<f64> {
    if d == 0 || d >= n {
        return Err(Error::arg(format!("need 1 <= d < N (d = {d}, N = {n})")));
    }
    let (n, d) = (n as f64, d as f64);
    Ok(0.5 + (d - 0.5).sqrt() * (n - d - 0.5).sqrt() / (n - 1.0))
}

/// How the permuted view's basis is obtained in the jackstraw test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JackstrawRoute {
    /// Permute the data, rebuild the kernel and recompute its eigenbasis.
    #[default]
    Rebuild,
    /// Permute the rows of an existing basis of the second view. Equivalent
    /// up to eigensolver round-off, since `K[π, π]` has eigenvectors `W[π, :]`.
    PermuteBasis,
}

/// Outcome of a jackstraw run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Jackstraw {
    pub threshold: f64,
    /// Second principal cosine for each permutation.
    pub gammas: Vec<f64>,
}

/// Draws `count` independent uniform row permutations.
pub fn random_permutations(n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect()
}

/// Jackstraw threshold `(1 + max γ̃_2) / 2` over seeded permutations of view `y`.
pub fn jackstraw_threshold(
    basis_x: &SpectralBasis,
    data_y: &Dataset,
    params: &KernelParams,
    permutations: usize,
    seed: u64,
) -> Result<f64> {
    if permutations == 0 {
        return Err(Error::arg("need at least one permutation"));
    }
    let perms = random_permutations(data_y.n(), permutations, seed);
    let opts = EigenOptions {
        seed,
        ..EigenOptions::default()
    };
    Ok(jackstraw_rebuild(basis_x, data_y, params, &perms, &opts)?.threshold)
}

fn check_jackstraw(basis_x: &SpectralBasis, n_y: usize, perms: &[Vec<usize>]) -> Result<()> {
    if basis_x.n() < 4 {
        return Err(Error::arg(format!("jackstraw needs N >= 4, got {}", basis_x.n())));
    }
    if basis_x.n() != n_y {
        return Err(Error::dim(format!(
            "views have different sample counts ({} and {n_y})",
            basis_x.n()
        )));
    }
    if basis_x.d() < 2 {
        return Err(Error::arg("jackstraw needs d >= 2"));
    }
    if perms.is_empty() {
        return Err(Error::arg("need at least one permutation"));
    }
    for p in perms {
        if p.len() != n_y {
            return Err(Error::arg("permutation length differs from N"));
        }
        let mut seen = vec![false; n_y];
        for &i in p {
            if i >= n_y || std::mem::replace(&mut seen[i], true) {
                return Err(Error::arg("invalid permutation"));
            }
        }
    }
    Ok(())
}

fn summarize(gammas: Vec<f64>) -> Jackstraw {
    let worst = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Jackstraw {
        threshold: 0.5 * (1.0 + worst),
        gammas,
    }
}

fn second_cosine(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<f64> {
    Ok(principal_cosines(a, b)?[1])
}

/// Jackstraw with explicit permutations, rebuilding the permuted kernel each time.
pub fn jackstraw_rebuild(
    basis_x: &SpectralBasis,
    data_y: &Dataset,
    params: &KernelParams,
    perms: &[Vec<usize>],
    opts: &EigenOptions,
) -> Result<Jackstraw> {
    check_jackstraw(basis_x, data_y.n(), perms)?;
    let d = basis_x.d();
    let mut gammas = Vec::with_capacity(perms.len());
    for p in perms {
        let permuted = data_y.select_rows(p)?;
        let kernel = build_kernel(&permuted, params)?;
        let basis = top_eigenbasis_with(&kernel, d, opts)?;
        gammas.push(second_cosine(basis_x.vectors(), basis.vectors())?);
    }
    Ok(summarize(gammas))
}

/// Jackstraw with explicit permutations applied to the rows of `basis_y`.
pub fn jackstraw_permuted_basis(
    basis_x: &SpectralBasis,
    basis_y: &SpectralBasis,
    perms: &[Vec<usize>],
) -> Result<Jackstraw> {
    check_jackstraw(basis_x, basis_y.n(), perms)?;
    let by = basis_y.truncated(basis_x.d());
    let gammas = perms
        .iter()
        .map(|p| second_cosine(basis_x.vectors(), by.permuted_rows(p)?.vectors()))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(gammas))
}

/// Counts the leading columns whose minimum score over views exceeds `e0`,
/// stopping at the first that does not, and records the result in the model.
pub fn select_m(model: &mut JsfModel, e0: f64) -> Result<usize> {
    if !(e0 > 0.5 && e0 <= 1.0) {
        return Err(Error::arg(format!("threshold must lie in (1/2, 1], got {e0}")));
    }
    let m = model.min_scores().iter().take_while(|&&s| s > e0).count();
    model.m = m;
    model.threshold = Some(e0);
    Ok(m)
}

/// Cosine between `f` and the constant vector.
pub fn constant_alignment(f: &[f64]) -> f64 {
    let n = f.len() as f64;
    let sum: f64 = f.iter().sum();
    let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    (sum / (n.sqrt() * norm)).abs()
}

/// Columns closer than this cosine to the constant vector count as trivial.
pub const TRIVIAL_ALIGNMENT: f64 = 0.9;

/// Index of the first function not dominated by the constant direction.
pub fn first_nontrivial(model: &JsfModel) -> Option<usize> {
    (0..model.max_functions()).find(|&c| constant_alignment(model.function(c)) < TRIVIAL_ALIGNMENT)
}
