//! Thick-restart Lanczos for the algebraically largest eigenpairs of a
//! symmetric operator.
//!
//! The Krylov basis is kept fully reorthogonalised (two passes of classical
//! Gram-Schmidt per step), so the projected matrix is formed directly from the
//! orthogonalisation coefficients. On restart the wanted Ritz vectors plus a
//! buffer are kept and the residual vector continues the expansion.

use faer::linalg::matmul::matmul;
use faer::{Accum, Col, Mat, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spectral::SymmetricOperator;

pub(crate) struct LanczosConfig {
    pub nev: usize,
    pub krylov_dim: usize,
    pub tol: f64,
    pub max_restarts: usize,
    pub seed: u64,
}

/// Returns `(vectors, values)` with values sorted descending.
pub(crate) fn lanczos_largest(op: &dyn SymmetricOperator, cfg: &LanczosConfig) -> Result<(Mat<f64>, Vec<f64>)> {
    let n = op.dim();
    let nev = cfg.nev;
    let m = cfg.krylov_dim.min(n).max(nev + 1).min(n);
    if nev == 0 || nev >= n {
        return Err(Error::arg(format!("need 1 <= d < N (d = {nev}, N = {n})")));
    }
    let par = faer::get_global_parallelism();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // columns 0..m span the Krylov space, column m holds the residual direction
    let mut basis = Mat::<f64>::zeros(n, m + 1);
    let mut proj = Mat::<f64>::zeros(m, m);
    let mut w = Col::<f64>::zeros(n);
    let mut tmp = vec![0.0; n];

    random_unit(&mut rng, basis.col_as_slice_mut(0));
    let mut kept = 0;
    let mut anorm = 0.0f64;
    let mut last_residuals = Vec::new();

    for restart in 0..=cfg.max_restarts {
        let mut beta_last = 0.0;
        for j in kept..m {
            op.apply(basis.col_as_slice(j), &mut tmp);
            w.as_mut()
                .try_as_col_major_mut()
                .expect("contiguous")
                .as_slice_mut()
                .copy_from_slice(&tmp);
            let input_norm = w.norm_l2();
            let coeffs = orthogonalize(&basis, j + 1, &mut w, par);
            for (i, &h) in coeffs.iter().enumerate() {
                proj[(i, j)] = h;
                proj[(j, i)] = h;
            }
            anorm = anorm.max(input_norm).max(coeffs[j].abs());
            let mut beta = w.norm_l2();
            // breakdown: the current basis spans an invariant subspace
            if beta <= 1e-12 * anorm.max(f64::MIN_POSITIVE) {
                beta = 0.0;
                if j + 1 < n {
                    loop {
                        random_unit(
                            &mut rng,
                            w.as_mut().try_as_col_major_mut().expect("contiguous").as_slice_mut(),
                        );
                        orthogonalize(&basis, j + 1, &mut w, par);
                        let nrm = w.norm_l2();
                        if nrm > 1e-8 {
                            w /= nrm;
                            break;
                        }
                    }
                } else {
                    w.fill(0.0);
                }
            } else {
                w /= beta;
            }
            basis.col_mut(j + 1).copy_from(&w);
            beta_last = beta;
        }

        let eig = proj
            .as_ref()
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| Error::Linalg(format!("projected eigenproblem: {e:?}")))?;
        let vals = eig.S().column_vector();
        let vecs = eig.U();
        // descending order
        let order: Vec<usize> = (0..m).rev().collect();
        let theta: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        anorm = anorm.max(theta[0].abs()).max(theta[m - 1].abs());
        let residuals: Vec<f64> = order.iter().map(|&i| (beta_last * vecs[(m - 1, i)]).abs()).collect();
        let converged = residuals[..nev].iter().all(|&r| r <= cfg.tol * anorm);
        last_residuals = residuals[..nev].to_vec();

        if converged || m == n && beta_last == 0.0 {
            let y = Mat::from_fn(m, nev, |i, c| vecs[(i, order[c])]);
            let mut x = Mat::<f64>::zeros(n, nev);
            matmul(
                x.as_mut(),
                Accum::Replace,
                basis.as_ref().subcols(0, m),
                y.as_ref(),
                1.0,
                par,
            );
            return Ok((x, theta[..nev].to_vec()));
        }
        if restart == cfg.max_restarts {
            break;
        }

        // keep the wanted Ritz pairs, plus one extra per converged pair up to
        // half of the remaining room
        let nconv = residuals[..nev].iter().filter(|&&r| r <= cfg.tol * anorm).count();
        let keep = (nev + nconv.min((m - nev) / 2)).min(m - 1);
        let y = Mat::from_fn(m, keep, |i, c| vecs[(i, order[c])]);
        let mut ritz = Mat::<f64>::zeros(n, keep);
        matmul(
            ritz.as_mut(),
            Accum::Replace,
            basis.as_ref().subcols(0, m),
            y.as_ref(),
            1.0,
            par,
        );
        let residual_dir = basis.col(m).to_owned();
        basis.as_mut().subcols_mut(0, keep).copy_from(&ritz);
        basis.col_mut(keep).copy_from(&residual_dir);
        proj.fill(0.0);
        for (c, &t) in theta.iter().take(keep).enumerate() {
            proj[(c, c)] = t;
        }
        kept = keep;
    }
    Err(Error::NoConvergence {
        restarts: cfg.max_restarts,
        residuals: last_residuals,
    })
}

/// Removes from `w` its components along the first `cols` basis columns,
/// twice, and returns the accumulated coefficients.
fn orthogonalize(basis: &Mat<f64>, cols: usize, w: &mut Col<f64>, par: faer::Par) -> Vec<f64> {
    let v = basis.as_ref().subcols(0, cols);
    let mut total = vec![0.0; cols];
    for _ in 0..2 {
        let h: Col<f64> = v.transpose() * w.as_ref();
        matmul(w.as_mut().as_mat_mut(), Accum::Add, v, h.as_ref().as_mat(), -1.0, par);
        for (t, i) in total.iter_mut().zip(0..cols) {
            *t += h[i];
        }
    }
    total
}

fn random_unit(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let nrm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in out.iter_mut() {
        *v /= nrm;
    }
}
