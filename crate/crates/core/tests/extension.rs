mod common;

use common::*;
use jointsmooth::extension::{build_extender, ExtensionMode, ExtensionModel};
use jointsmooth::jsf::{jsf_two_view_with, JsfModel};
use jointsmooth::kernels::{build_kernel, median_bandwidth};
use jointsmooth::spectral::top_eigenbasis_with;
use jointsmooth::synthetic::{generate_toy, MultiViewSample};
use jointsmooth::{Dataset, EigenMethod, EigenOptions, KernelParams, SpectralBasis};

fn fit(sample: &MultiViewSample, d: usize, m: usize, knn: bool) -> (JsfModel, ExtensionModel) {
    let opts = EigenOptions {
        method: EigenMethod::Dense,
        tol: 1e-12,
        ..EigenOptions::default()
    };
    let bases: Vec<SpectralBasis> = sample
        .views
        .iter()
        .map(|v| {
            let params = if knn {
                KernelParams::KnnContinuous { k: 10, delta: 1.0 }
            } else {
                KernelParams::Gaussian {
                    bandwidth: median_bandwidth(v, 0.3).unwrap(),
                }
            };
            top_eigenbasis_with(&build_kernel(v, &params).unwrap(), d, &opts).unwrap()
        })
        .collect();
    let mut model = jsf_two_view_with(&bases[0], &bases[1], m).unwrap();
    model.set_m(m).unwrap();
    let ext = build_extender(&model, &bases, &sample.views).unwrap();
    (model, ext)
}

#[test]
fn exact_at_training_points_gaussian() {
    let sample = generate_toy(250, 3).unwrap();
    let (model, ext) = fit(&sample, 25, 6, false);
    let out = ext.extend(&sample.views, ExtensionMode::Normalized).unwrap();
    let mut worst = 0.0f64;
    for i in 0..model.n() {
        for c in 0..6 {
            worst = worst.max((out[(i, c)] - model.function(c)[i]).abs());
        }
    }
    assert!(worst < 1e-6, "max deviation {worst}");
}

#[test]
fn batch_equals_row_by_row() {
    let sample = generate_toy(300, 4).unwrap();
    let queries = generate_toy(40, 99).unwrap();
    for knn in [false, true] {
        let (_, ext) = fit(&sample, 20, 4, knn);
        for mode in [ExtensionMode::Normalized, ExtensionMode::Mean] {
            let batch = ext.extend(&queries.views, mode).unwrap();
            for i in 0..40 {
                let rows: Vec<&[f64]> = queries.views.iter().map(|v| v.row(i)).collect();
                let single = ext.extend_row(&rows, mode).unwrap();
                for c in 0..4 {
                    assert_eq!(batch[(i, c)].to_bits(), single[c].to_bits(), "knn = {knn}, row {i}");
                }
            }
        }
    }
}

#[test]
fn extension_is_lipschitz_under_small_perturbations() {
    let sample = generate_toy(250, 5).unwrap();
    let (_, ext) = fit(&sample, 20, 4, false);
    let queries = generate_toy(20, 77).unwrap();
    let dir = gaussian_mat(20, 5, 3);
    for i in 0..20 {
        let base: Vec<Vec<f64>> = queries.views.iter().map(|v| v.row(i).to_vec()).collect();
        let f0 = {
            let r: Vec<&[f64]> = base.iter().map(Vec::as_slice).collect();
            ext.extend_row(&r, ExtensionMode::Normalized).unwrap()
        };
        let mut rates = Vec::new();
        for eps in [1e-3, 1e-4] {
            let moved: Vec<Vec<f64>> = base
                .iter()
                .enumerate()
                .map(|(k, row)| {
                    row.iter()
                        .enumerate()
                        .map(|(j, x)| x + eps * dir[(i, (3 * k + j) % 5)])
                        .collect()
                })
                .collect();
            let r: Vec<&[f64]> = moved.iter().map(Vec::as_slice).collect();
            let f1 = ext.extend_row(&r, ExtensionMode::Normalized).unwrap();
            let shift = f0.iter().zip(&f1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            rates.push(shift / eps);
        }
        assert!(rates.iter().all(|r| r.is_finite() && *r < 1e3), "row {i}: {rates:?}");
        // first-order behaviour: the rate barely changes when ε shrinks tenfold
        assert!(rates[1] <= 2.0 * rates[0] + 1e-6, "row {i}: {rates:?}");
    }
}

#[test]
fn wrong_dimension_is_rejected() {
    let sample = generate_toy(120, 6).unwrap();
    let (_, ext) = fit(&sample, 10, 2, false);
    assert!(ext.extend_concatenated(&[0.0; 4], ExtensionMode::Normalized).is_err());
    let bad = Dataset::query(vec![0.0; 4], 1, 4, "spiral").unwrap();
    assert!(ext.extend_partial(0, &bad).is_err());
}

#[test]
fn single_view_partial_is_plain_nystrom() {
    let sample = generate_toy(200, 7).unwrap();
    let (model, ext) = fit(&sample, 20, 3, false);
    // at a training point the partial extension reproduces W_k α_k
    let part = ext.extend_partial(0, &sample.views[0]).unwrap();
    let proj = model.functions().subcols(0, 3).to_owned();
    let w = {
        let opts = EigenOptions {
            method: EigenMethod::Dense,
            tol: 1e-12,
            ..EigenOptions::default()
        };
        let v = &sample.views[0];
        let p = KernelParams::Gaussian {
            bandwidth: median_bandwidth(v, 0.3).unwrap(),
        };
        top_eigenbasis_with(&build_kernel(v, &p).unwrap(), 20, &opts).unwrap()
    };
    let expected = w.vectors() * (w.vectors().transpose() * proj.as_ref());
    assert!(max_abs_diff(part.as_ref(), expected.as_ref()) < 1e-6);
}
