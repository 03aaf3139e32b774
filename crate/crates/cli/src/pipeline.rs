//! Shared steps of `fit` and `threshold`: config assembly, loading views,
//! eigenbases and the score threshold.

use std::path::{Path, PathBuf};

use jointsmooth::jsf::{
    analytic_threshold, jackstraw_permuted_basis, jackstraw_rebuild, random_permutations, JackstrawRoute,
};
use jointsmooth::kernels::build_kernel;
use jointsmooth::spectral::{default_d, top_eigenbasis_with};
use jointsmooth::{Dataset, EigenOptions, KernelParams, KernelSpec, SpectralBasis};
use serde::Serialize;

use crate::args::{ConfigArgs, KernelKind};
use crate::config::{RunConfig, ThresholdMode};
use crate::error::{CliError, CliResult};

/// Loads the config file, if any, and applies flag overrides.
pub fn assemble_config(args: &ConfigArgs) -> CliResult<RunConfig> {
    let mut c = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if !args.views.is_empty() {
        c.views = args.views.clone();
    }
    if let Some(kind) = args.kernel {
        c.kernel = match kind {
            KernelKind::Gaussian => KernelSpec::default(),
            KernelKind::Knn => KernelSpec::KnnContinuous { k: 25, delta: 1.0 },
        };
    }
    match &mut c.kernel {
        KernelSpec::Gaussian { factor, bandwidth } => {
            if args.k.is_some() || args.delta.is_some() {
                return Err(CliError::Usage("--k and --delta apply to the knn kernel".into()));
            }
            if let Some(f) = args.bandwidth_factor {
                *factor = f;
            }
            if let Some(b) = args.bandwidth {
                *bandwidth = Some(b);
            }
        }
        KernelSpec::KnnContinuous { k, delta } => {
            if args.bandwidth.is_some() || args.bandwidth_factor.is_some() {
                return Err(CliError::Usage(
                    "--bandwidth and --bandwidth-factor apply to the gaussian kernel".into(),
                ));
            }
            if let Some(v) = args.k {
                *k = v;
            }
            if let Some(v) = args.delta {
                *delta = v;
            }
        }
    }
    if args.d.is_some() {
        c.d = args.d;
    }
    if args.max_functions.is_some() {
        c.max_functions = args.max_functions;
    }
    if let Some(t) = args.threshold {
        c.threshold = t;
    }
    if let Some(p) = args.permutations {
        c.permutations = p;
    }
    if let Some(r) = args.jackstraw_route {
        c.jackstraw_route = r;
    }
    if let Some(m) = args.eigen_method {
        c.eigen.method = m;
    }
    if let Some(t) = args.eigen_tol {
        c.eigen.tol = t;
    }
    if let Some(s) = args.seed {
        c.seed = s;
    }
    if let Some(o) = &args.out_dir {
        c.out_dir = o.clone();
    }
    c.validate()?;
    Ok(c)
}

/// Views read from disk with their resolved kernel parameters.
pub struct Prepared {
    pub datasets: Vec<Dataset>,
    pub params: Vec<KernelParams>,
    pub d: usize,
}

impl Prepared {
    pub fn n(&self) -> usize {
        self.datasets[0].n()
    }
}

pub fn view_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn read_view(path: &Path) -> CliResult<Dataset> {
    Dataset::read_csv(path, view_id(path)).map_err(|e| match e {
        jointsmooth::Error::Io(io) => CliError::io(path, io),
        other => CliError::Data(format!("{}: {other}", path.display())),
    })
}

pub fn prepare(config: &RunConfig) -> CliResult<Prepared> {
    let datasets = config
        .views
        .iter()
        .map(|p| read_view(p))
        .collect::<CliResult<Vec<_>>>()?;
    let n = datasets[0].n();
    if let Some((i, bad)) = datasets.iter().enumerate().find(|(_, d)| d.n() != n) {
        return Err(CliError::Data(format!(
            "row counts differ: {} has {n} rows, {} has {}",
            config.views[0].display(),
            config.views[i].display(),
            bad.n()
        )));
    }
    let d = config.d.unwrap_or_else(|| default_d(n));
    if d >= n {
        return Err(CliError::Usage(format!("d = {d} must be smaller than N = {n}")));
    }
    let params = datasets
        .iter()
        .map(|ds| config.kernel.resolve(ds, config.seed))
        .collect::<jointsmooth::Result<Vec<_>>>()?;
    Ok(Prepared { datasets, params, d })
}

pub fn eigen_options(config: &RunConfig) -> EigenOptions {
    EigenOptions {
        method: config.eigen.method,
        tol: config.eigen.tol,
        seed: config.seed,
        ..EigenOptions::default()
    }
}

pub fn compute_basis(config: &RunConfig, prep: &Prepared, view: usize) -> CliResult<SpectralBasis> {
    let (ds, params) = (&prep.datasets[view], &prep.params[view]);
    log::info!("view {}: building {params:?} kernel", ds.view_id());
    let kernel = build_kernel(ds, params)?;
    log::info!("view {}: {} leading eigenpairs", ds.view_id(), prep.d);
    Ok(top_eigenbasis_with(&kernel, prep.d, &eigen_options(config))?)
}

/// Builds one kernel at a time so only a single kernel is held in memory.
pub fn compute_bases(config: &RunConfig, prep: &Prepared) -> CliResult<Vec<SpectralBasis>> {
    (0..prep.datasets.len())
        .map(|k| compute_basis(config, prep, k))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdReport {
    pub mode: ThresholdMode,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gammas: Vec<f64>,
}

/// E0 for the configured mode; `None` when thresholding is switched off.
/// The jackstraw needs the first basis, and the second too on the
/// permute-basis route.
pub fn compute_threshold(
    config: &RunConfig,
    prep: &Prepared,
    bases: &[SpectralBasis],
) -> CliResult<Option<ThresholdReport>> {
    match config.threshold {
        ThresholdMode::None => Ok(None),
        ThresholdMode::Analytic => Ok(Some(ThresholdReport {
            mode: ThresholdMode::Analytic,
            threshold: analytic_threshold(prep.n(), prep.d)?,
            gammas: Vec::new(),
        })),
        ThresholdMode::Jackstraw => {
            if prep.datasets.len() != 2 {
                return Err(CliError::Usage(format!(
                    "the jackstraw threshold is defined for two views, got {}; use --threshold analytic",
                    prep.datasets.len()
                )));
            }
            let perms = random_permutations(prep.n(), config.permutations, config.seed);
            let result = match config.jackstraw_route {
                JackstrawRoute::Rebuild => jackstraw_rebuild(
                    &bases[0],
                    &prep.datasets[1],
                    &prep.params[1],
                    &perms,
                    &eigen_options(config),
                )?,
                JackstrawRoute::PermuteBasis => jackstraw_permuted_basis(&bases[0], &bases[1], &perms)?,
            };
            Ok(Some(ThresholdReport {
                mode: ThresholdMode::Jackstraw,
                threshold: result.threshold,
                gammas: result.gammas,
            }))
        }
    }
}

/// Absolute view paths, so a saved config stays usable from any directory.
pub fn absolute_views(config: &RunConfig) -> CliResult<Vec<PathBuf>> {
    config
        .views
        .iter()
        .map(|p| std::fs::canonicalize(p).map_err(|e| CliError::io(p, e)))
        .collect()
}
