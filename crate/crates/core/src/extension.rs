//! Nyström extension of jointly smooth functions to new samples.
//!
//! For view `k` with training eigenpairs `(W_k, Λ_k)` and coefficients
//! `α_k = W_k^T U`, the extended eigenvectors at new points are
//! `W*_k = K*_k W_k Λ_k^{-1}`. Since `Σ_k W_k α_k = W W^T u_m = σ_m² u_m`, the
//! combination `f*_m = (1/σ_m²) Σ_k W*_k α_k` reproduces `u_m` at training
//! points. [`ExtensionMode::Mean`] instead averages the per-view terms.

use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::jsf::JsfModel;
use crate::kdtree::{dist_sq, KdTree};
use crate::kernels::{knn_weight, KernelParams};
use crate::spectral::SpectralBasis;

/// Eigen-directions with `|λ| <= LAMBDA_CUTOFF * λ_1` are left out.
pub const LAMBDA_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtensionMode {
    /// `(1/σ_m²) Σ_k W*_k α_k`, exact at training points.
    #[default]
    Normalized,
    /// `(1/K) Σ_k W*_k α_k`.
    Mean,
}

#[derive(Debug, Clone)]
struct ViewExtender {
    data: Dataset,
    params: KernelParams,
    tree: Option<KdTree>,
    radii: Vec<f64>,
    max_radius: f64,
    kept: Vec<usize>,
    dropped: Vec<usize>,
    /// `W_kept Λ_kept^{-1} α_kept`, `N x M`.
    weights: Mat<f64>,
}

impl ViewExtender {
    fn new(data: &Dataset, basis: &SpectralBasis, alpha: faer::MatRef<'_, f64>) -> Result<Self> {
        let lambda = basis.eigenvalues();
        let top = lambda[0].abs();
        let (kept, dropped): (Vec<usize>, Vec<usize>) =
            (0..alpha.nrows()).partition(|&i| lambda[i].abs() > LAMBDA_CUTOFF * top);
        if kept.is_empty() || top == 0.0 {
            return Err(Error::IllPosedExtension(format!(
                "every eigenvalue of view {} is below the cutoff",
                data.view_id()
            )));
        }
        let n = data.n();
        let m = alpha.ncols();
        let w = basis.vectors();
        let mut weights = Mat::<f64>::zeros(n, m);
        for &i in &kept {
            let inv = 1.0 / lambda[i];
            let wi = w.col(i);
            for c in 0..m {
                let a = alpha[(i, c)] * inv;
                if a != 0.0 {
                    let col = weights.col_as_slice_mut(c);
                    for (r, v) in col.iter_mut().enumerate() {
                        *v += wi[r] * a;
                    }
                }
            }
        }
        let (tree, radii) = match basis.params() {
            KernelParams::KnnContinuous { k, .. } => {
                let tree = KdTree::new(data.as_slice(), data.dim());
                let radii = (0..n)
                    .map(|i| {
                        tree.nearest(data.row(i), *k, Some(i))
                            .last()
                            .map_or(0.0, |nb| nb.dist_sq.sqrt())
                    })
                    .collect();
                (Some(tree), radii)
            }
            KernelParams::Gaussian { .. } => (None, Vec::new()),
            KernelParams::Precomputed => {
                return Err(Error::arg(format!(
                    "view {} uses a precomputed kernel, which cannot be evaluated at new points",
                    data.view_id()
                )))
            }
        };
        let max_radius = radii.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            data: data.clone(),
            params: *basis.params(),
            tree,
            radii,
            max_radius,
            kept,
            dropped,
            weights,
        })
    }

    /// Cross-kernel row between `q` and every training point, as sparse
    /// `(index, weight)` pairs for k-NN kernels or a dense row otherwise.
    fn kernel_row(&self, q: &[f64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        match self.params {
            KernelParams::Gaussian { bandwidth } => {
                let s = 2.0 * bandwidth * bandwidth;
                out.extend(
                    self.data
                        .rows()
                        .enumerate()
                        .map(|(j, x)| (j, (-dist_sq(q, x) / s).exp())),
                );
            }
            KernelParams::KnnContinuous { k, delta } => {
                let tree = self.tree.as_ref().expect("k-NN view has a tree");
                let own = tree.nearest(q, k, None);
                let rq = own.last().map_or(0.0, |nb| nb.dist_sq.sqrt());
                // q counts as a neighbour of j when it falls inside j's k-NN radius
                let reverse = tree.within(q, self.max_radius * self.max_radius);
                let mut own_iter = {
                    let mut o: Vec<_> = own.iter().map(|nb| (nb.index, nb.dist_sq)).collect();
                    o.sort_unstable_by_key(|e| e.0);
                    o.into_iter().peekable()
                };
                let mut push = |j: usize, d2: f64, count: f64| {
                    out.push((j, 0.5 * count * knn_weight(d2, rq, self.radii[j], delta)));
                };
                for nb in reverse {
                    while let Some(&(j, d2)) = own_iter.peek() {
                        if j >= nb.index {
                            break;
                        }
                        push(j, d2, 1.0);
                        own_iter.next();
                    }
                    let in_own = own_iter.peek().is_some_and(|&(j, _)| j == nb.index);
                    if in_own {
                        own_iter.next();
                    }
                    let in_reverse = nb.dist_sq <= self.radii[nb.index] * self.radii[nb.index];
                    let count = f64::from(u8::from(in_own)) + f64::from(u8::from(in_reverse));
                    if count > 0.0 {
                        push(nb.index, nb.dist_sq, count);
                    }
                }
                for (j, d2) in own_iter {
                    push(j, d2, 1.0);
                }
            }
            KernelParams::Precomputed => unreachable!("rejected at construction"),
        }
    }

    /// Adds `K*[q, :] · weights` into `acc`.
    fn accumulate(&self, q: &[f64], row: &mut Vec<(usize, f64)>, acc: &mut [f64]) {
        self.kernel_row(q, row);
        for (c, a) in acc.iter_mut().enumerate() {
            let w = self.weights.col_as_slice(c);
            *a += row.iter().map(|&(j, k)| k * w[j]).sum::<f64>();
        }
    }
}

/// Everything needed to evaluate the selected functions at new samples.
#[derive(Debug, Clone)]
pub struct ExtensionModel {
    views: Vec<ViewExtender>,
    sigma_sq: Vec<f64>,
}

/// Prepares the extension of the first `model.m()` functions.
pub fn build_extender(model: &JsfModel, bases: &[SpectralBasis], datasets: &[Dataset]) -> Result<ExtensionModel> {
    let m = model.m();
    if m == 0 {
        return Err(Error::arg("model has no selected functions (M = 0)"));
    }
    if bases.len() != model.views() || datasets.len() != model.views() {
        return Err(Error::dim(format!(
            "model has {} views but {} bases and {} datasets were given",
            model.views(),
            bases.len(),
            datasets.len()
        )));
    }
    let d = model.d();
    let mut views = Vec::with_capacity(bases.len());
    for (k, (basis, data)) in bases.iter().zip(datasets).enumerate() {
        if basis.n() != model.n() || data.n() != model.n() {
            return Err(Error::dim(format!(
                "view {} has {} samples, model has {}",
                data.view_id(),
                data.n(),
                model.n()
            )));
        }
        if basis.d() < d {
            return Err(Error::dim(format!(
                "basis of view {} has d = {}, model needs {d}",
                data.view_id(),
                basis.d()
            )));
        }
        if basis.params() != &model.kernel_params()[k] {
            return Err(Error::arg(format!(
                "kernel of view {} ({:?}) differs from the model ({:?})",
                data.view_id(),
                basis.params(),
                model.kernel_params()[k]
            )));
        }
        let alpha = model.coefficients(k).subcols(0, m);
        views.push(ViewExtender::new(data, &basis.truncated(d), alpha)?);
    }
    Ok(ExtensionModel {
        views,
        sigma_sq: model.singular_values()[..m].iter().map(|s| s * s).collect(),
    })
}

impl ExtensionModel {
    pub fn m(&self) -> usize {
        self.sigma_sq.len()
    }

    pub fn views(&self) -> usize {
        self.views.len()
    }

    /// Ambient dimension of each view.
    pub fn view_dims(&self) -> Vec<usize> {
        self.views.iter().map(|v| v.data.dim()).collect()
    }

    /// Eigen-directions of `view` excluded by the eigenvalue cutoff.
    pub fn dropped(&self, view: usize) -> &[usize] {
        &self.views[view].dropped
    }

    pub fn retained(&self, view: usize) -> &[usize] {
        &self.views[view].kept
    }

    fn check_row(&self, view: usize, q: &[f64]) -> Result<()> {
        let v = &self.views[view];
        if q.len() != v.data.dim() {
            return Err(Error::dim(format!(
                "view {} expects {} coordinates, got {}",
                v.data.view_id(),
                v.data.dim(),
                q.len()
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::data("non-finite coordinate"));
        }
        Ok(())
    }

    /// Extends one sample given by one coordinate slice per view.
    pub fn extend_row(&self, rows: &[&[f64]], mode: ExtensionMode) -> Result<Vec<f64>> {
        if rows.len() != self.views.len() {
            return Err(Error::dim(format!(
                "expected {} views, got {}",
                self.views.len(),
                rows.len()
            )));
        }
        for (k, q) in rows.iter().enumerate() {
            self.check_row(k, q)?;
        }
        let mut acc = vec![0.0; self.m()];
        let mut buf = Vec::new();
        for (v, q) in self.views.iter().zip(rows) {
            v.accumulate(q, &mut buf, &mut acc);
        }
        match mode {
            ExtensionMode::Normalized => acc.iter_mut().zip(&self.sigma_sq).for_each(|(a, s)| *a /= s),
            ExtensionMode::Mean => {
                let k = self.views.len() as f64;
                acc.iter_mut().for_each(|a| *a /= k);
            }
        }
        Ok(acc)
    }

    /// Splits one concatenated row into per-view slices and extends it.
    pub fn extend_concatenated(&self, row: &[f64], mode: ExtensionMode) -> Result<Vec<f64>> {
        let dims = self.view_dims();
        let total: usize = dims.iter().sum();
        if row.len() != total {
            return Err(Error::dim(format!("expected {total} coordinates, got {}", row.len())));
        }
        let mut parts = Vec::with_capacity(dims.len());
        let mut at = 0;
        for d in dims {
            parts.push(&row[at..at + d]);
            at += d;
        }
        self.extend_row(&parts, mode)
    }

    /// Extends `N*` aligned samples; returns an `N* x M` matrix. Each row is
    /// computed independently, so results do not depend on batching.
    pub fn extend(&self, queries: &[Dataset], mode: ExtensionMode) -> Result<Mat<f64>> {
        if queries.len() != self.views.len() {
            return Err(Error::dim(format!(
                "expected {} views, got {}",
                self.views.len(),
                queries.len()
            )));
        }
        let n = queries[0].n();
        if let Some(q) = queries.iter().find(|q| q.n() != n) {
            return Err(Error::dim(format!(
                "query view {} has {} rows, expected {n}",
                q.view_id(),
                q.n()
            )));
        }
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                let parts: Vec<&[f64]> = queries.iter().map(|q| q.row(i)).collect();
                self.extend_row(&parts, mode)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mat::from_fn(n, self.m(), |i, c| rows[i][c]))
    }

    /// Plain Nyström from a single view: `W*_k α_k`. This does not enforce
    /// agreement with the other views.
    pub fn extend_partial(&self, view: usize, query: &Dataset) -> Result<Mat<f64>> {
        if view >= self.views.len() {
            return Err(Error::arg(format!("view index {view} out of range")));
        }
        let v = &self.views[view];
        let rows = (0..query.n())
            .into_par_iter()
            .map(|i| {
                self.check_row(view, query.row(i))?;
                let mut acc = vec![0.0; self.m()];
                v.accumulate(query.row(i), &mut Vec::new(), &mut acc);
                Ok(acc)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mat::from_fn(query.n(), self.m(), |i, c| rows[i][c]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jsf::jsf_two_view;
    use crate::kernels::{gaussian_kernel, knn_kernel};
    use crate::spectral::top_eigenbasis;
    use approx::assert_abs_diff_eq;

    fn line(n: usize, id: &str) -> Dataset {
        Dataset::from_column(&(0..n).map(|i| i as f64 / n as f64).collect::<Vec<_>>(), id).unwrap()
    }

    #[test]
    fn shared_first_direction_has_unit_coefficient() {
        let unit = |cols: &[usize]| {
            let m = Mat::from_fn(8, cols.len(), |i, j| if i == cols[j] { 1.0 } else { 0.0 });
            SpectralBasis::new(m, vec![1.0; cols.len()], KernelParams::Precomputed).unwrap()
        };
        // the views share only their first direction, so f_1 = w_1
        let model = jsf_two_view(&unit(&[0, 1, 2]), &unit(&[0, 5, 6])).unwrap();
        let alpha = model.coefficients(0);
        assert_abs_diff_eq!(alpha[(0, 0)], 1.0, epsilon = 1e-12);
        for i in 1..3 {
            assert_abs_diff_eq!(alpha[(i, 0)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_views_have_identical_coefficients() {
        let data = line(30, "x");
        let k = gaussian_kernel(&data, 0.2).unwrap();
        let b = top_eigenbasis(&k, 4, 1e-12).unwrap();
        let model = jsf_two_view(&b, &b).unwrap();
        let (a0, a1) = (model.coefficients(0), model.coefficients(1));
        for c in 0..a0.ncols() {
            for i in 0..4 {
                assert_abs_diff_eq!(a0[(i, c)], a1[(i, c)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn replay_and_batching_on_identical_views() {
        let data = line(40, "x");
        let k = gaussian_kernel(&data, 0.15).unwrap();
        let b = top_eigenbasis(&k, 5, 1e-12).unwrap();
        let mut model = jsf_two_view(&b, &b).unwrap();
        model.set_m(3).unwrap();
        let ext = build_extender(&model, &[b.clone(), b.clone()], &[data.clone(), data.clone()]).unwrap();
        let out = ext
            .extend(&[data.clone(), data.clone()], ExtensionMode::Normalized)
            .unwrap();
        for c in 0..3 {
            for i in 0..40 {
                assert_abs_diff_eq!(out[(i, c)], model.function(c)[i], epsilon = 1e-8);
            }
        }
        for i in [0, 17, 39] {
            let one = ext
                .extend_row(&[data.row(i), data.row(i)], ExtensionMode::Normalized)
                .unwrap();
            for c in 0..3 {
                assert_eq!(one[c].to_bits(), out[(i, c)].to_bits());
            }
        }
    }

    #[test]
    fn rejects_unselected_model_and_bad_rows() {
        let data = line(20, "x");
        let k = gaussian_kernel(&data, 0.2).unwrap();
        let b = top_eigenbasis(&k, 3, 1e-12).unwrap();
        let mut model = jsf_two_view(&b, &b).unwrap();
        assert!(build_extender(&model, &[b.clone(), b.clone()], &[data.clone(), data.clone()]).is_err());
        model.set_m(1).unwrap();
        let ext = build_extender(&model, &[b.clone(), b.clone()], &[data.clone(), data.clone()]).unwrap();
        assert!(ext
            .extend_row(&[&[0.1, 0.2], &[0.1]], ExtensionMode::Normalized)
            .is_err());
        assert!(ext.extend_concatenated(&[0.1], ExtensionMode::Normalized).is_err());
    }

    #[test]
    fn knn_cross_kernel_matches_training_row_pattern() {
        let data = line(50, "x");
        let kern = knn_kernel(&data, 4, 1.0).unwrap();
        let b = top_eigenbasis(&kern, 5, 1e-12).unwrap();
        let mut model = jsf_two_view(&b, &b).unwrap();
        model.set_m(2).unwrap();
        let ext = build_extender(&model, &[b.clone(), b.clone()], &[data.clone(), data.clone()]).unwrap();
        let v = &ext.views[0];
        let mut row = Vec::new();
        v.kernel_row(&[0.5 + 1e-3], &mut row);
        assert!(!row.is_empty() && row.len() <= 2 * 4 + 1);
        assert!(row.iter().all(|&(_, w)| w > 0.0 && w <= 1.0));
        let idx: Vec<usize> = row.iter().map(|e| e.0).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let out = ext.extend_row(&[&[0.5], &[0.5]], ExtensionMode::Normalized).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
