//! Scores used to judge recovered coordinates against ground truth.

use crate::error::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("lengths differ ({} and {})", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::arg("need at least two samples"));
    }
    Ok(())
}

/// Double-centred distance matrix of a scalar sample, produced one row at a
/// time so memory stays linear in `n`.
struct Centered<'a> {
    x: &'a [f64],
    row_means: Vec<f64>,
    grand: f64,
}

impl<'a> Centered<'a> {
    fn new(x: &'a [f64]) -> Self {
        let n = x.len() as f64;
        let row_means: Vec<f64> = x
            .iter()
            .map(|&a| x.iter().map(|&b| (a - b).abs()).sum::<f64>() / n)
            .collect();
        let grand = row_means.iter().sum::<f64>() / n;
        Self { x, row_means, grand }
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        (self.x[i] - self.x[j]).abs() - self.row_means[i] - self.row_means[j] + self.grand
    }
}

/// Sample distance correlation of two scalar variables, in `[0, 1]`.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let a = Centered::new(x);
    let b = Centered::new(y);
    let n = x.len();
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let (u, v) = (a.entry(i, j), b.entry(i, j));
            ab += u * v;
            aa += u * u;
            bb += v * v;
        }
    }
    if aa <= 0.0 || bb <= 0.0 {
        return Ok(0.0);
    }
    Ok((ab.max(0.0) / (aa * bb).sqrt()).sqrt())
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut r = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation, with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&ranks(x), &ranks(y))
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

/// Mean over equal-width bins of `truth` of the variance of `f` in each bin.
/// Empty bins are skipped.
pub fn binned_conditional_variance(f: &[f64], truth: &[f64], bins: usize) -> Result<f64> {
    check_pair(f, truth)?;
    if bins == 0 {
        return Err(Error::arg("need at least one bin"));
    }
    let lo = truth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut groups = vec![Vec::new(); bins];
    for (&v, &t) in f.iter().zip(truth) {
        let b = if width > 0.0 {
            (((t - lo) / width) as usize).min(bins - 1)
        } else {
            0
        };
        groups[b].push(v);
    }
    let filled: Vec<f64> = groups.iter().filter(|g| !g.is_empty()).map(|g| variance(g)).collect();
    Ok(filled.iter().sum::<f64>() / filled.len() as f64)
}

/// Standard deviation over mean of the distances from the centroid.
pub fn radius_cv(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let n = xs.len() as f64;
    let cx = xs.iter().sum::<f64>() / n;
    let cy = ys.iter().sum::<f64>() / n;
    let r: Vec<f64> = xs.iter().zip(ys).map(|(x, y)| (x - cx).hypot(y - cy)).collect();
    let mean = r.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::data("all points coincide"));
    }
    Ok(variance(&r).sqrt() / mean)
}

/// Root-mean-square of `a - b` divided by the RMS of `b`.
pub fn relative_rmse(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        return Err(Error::data("reference is identically zero"));
    }
    Ok((num / den).sqrt())
}
