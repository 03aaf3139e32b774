#![allow(dead_code)]

use faer::Mat;
use jointsmooth::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draws via Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (std::f64::consts::TAU * v).cos()
}

pub fn gaussian_mat(n: usize, p: usize, seed: u64) -> Mat<f64> {
    let mut r = rng(seed);
    Mat::from_fn(n, p, |_, _| normal(&mut r))
}

/// Random `n x p` matrix with orthonormal columns.
pub fn orthonormal(n: usize, p: usize, seed: u64) -> Mat<f64> {
    gaussian_mat(n, p, seed).qr().compute_thin_Q()
}

/// Random orthogonal `p x p` matrix.
pub fn orthogonal(p: usize, seed: u64) -> Mat<f64> {
    orthonormal(p, p, seed)
}

pub fn random_dataset(n: usize, p: usize, seed: u64) -> Dataset {
    let m = gaussian_mat(n, p, seed);
    Dataset::from_mat(m.as_ref(), "x").unwrap()
}

pub fn max_abs_diff(a: faer::MatRef<'_, f64>, b: faer::MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn col(m: faer::MatRef<'_, f64>, j: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// Random uniform permutation.
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rng(seed));
    p
}
