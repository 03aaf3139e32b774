//! Run configuration: one JSON document, every field overridable by flags.

use std::path::{Path, PathBuf};

use jointsmooth::jsf::{JackstrawRoute, DEFAULT_PERMUTATIONS};
use jointsmooth::{EigenMethod, KernelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    Analytic,
    #[default]
    Jackstraw,
    /// Keep every computed function.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    #[serde(default)]
    pub method: EigenMethod,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_tol() -> f64 {
    1e-10
}

impl Default for EigenConfig {
    fn default() -> Self {
        Self {
            method: EigenMethod::Auto,
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// One CSV file per view; rows are aligned across files.
    #[serde(default)]
    pub views: Vec<PathBuf>,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Eigenvectors per view; `N / 4` (at most 2000) when absent.
    #[serde(default)]
    pub d: Option<usize>,
    /// Functions to compute; `min(2d, 512)` when absent.
    #[serde(default)]
    pub max_functions: Option<usize>,
    #[serde(default)]
    pub threshold: ThresholdMode,
    #[serde(default = "default_permutations")]
    pub permutations: usize,
    #[serde(default)]
    pub jackstraw_route: JackstrawRoute,
    #[serde(default)]
    pub eigen: EigenConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_permutations() -> usize {
    DEFAULT_PERMUTATIONS
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("jsf-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            views: Vec::new(),
            kernel: KernelSpec::default(),
            d: None,
            max_functions: None,
            threshold: ThresholdMode::default(),
            permutations: default_permutations(),
            jackstraw_route: JackstrawRoute::default(),
            eigen: EigenConfig::default(),
            seed: 0,
            out_dir: default_out_dir(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Usage(format!("invalid run config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Checks everything that can be checked without reading the data.
    pub fn validate(&self) -> CliResult<()> {
        if self.views.len() < 2 {
            return Err(CliError::Usage(format!(
                "need at least two views, got {}",
                self.views.len()
            )));
        }
        for v in &self.views {
            if !v.is_file() {
                return Err(CliError::Usage(format!("view file {} does not exist", v.display())));
            }
        }
        match self.kernel {
            KernelSpec::Gaussian { factor, bandwidth } => {
                if !(factor > 0.0 && factor.is_finite()) {
                    return Err(CliError::Usage(format!(
                        "bandwidth factor must be positive, got {factor}"
                    )));
                }
                if let Some(b) = bandwidth.filter(|b| !(*b > 0.0 && b.is_finite())) {
                    return Err(CliError::Usage(format!("bandwidth must be positive, got {b}")));
                }
            }
            KernelSpec::KnnContinuous { k, delta } => {
                if k == 0 || !(delta > 0.0 && delta.is_finite()) {
                    return Err(CliError::Usage(format!(
                        "need k >= 1 and delta > 0 (k = {k}, delta = {delta})"
                    )));
                }
            }
        }
        if self.d == Some(0) || self.max_functions == Some(0) {
            return Err(CliError::Usage("d and max_functions must be positive".into()));
        }
        if self.threshold == ThresholdMode::Jackstraw && self.permutations == 0 {
            return Err(CliError::Usage("jackstraw needs at least one permutation".into()));
        }
        if !(self.eigen.tol > 0.0 && self.eigen.tol.is_finite()) {
            return Err(CliError::Usage(format!(
                "eigen tolerance must be positive, got {}",
                self.eigen.tol
            )));
        }
        Ok(())
    }
}
