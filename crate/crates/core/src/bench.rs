//! Timing and peak-memory measurement of the sparse k-NN pipeline.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsf::jsf_two_view_with;
use crate::kernels::{gaussian_kernel, knn_kernel, median_bandwidth};
use crate::spectral::{top_eigenbasis_with, EigenMethod, EigenOptions};
use crate::synthetic::generate_toy;

/// Largest sample count the dense Gaussian path will attempt.
pub const MAX_DENSE_BENCH_N: usize = 8000;

/// System allocator that tracks live and peak heap bytes. Install with
/// `#[global_allocator] static A: PeakAllocator = PeakAllocator::new();`.
pub struct PeakAllocator {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl PeakAllocator {
    pub const fn new() -> Self {
        Self {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn current_bytes(&self) -> usize {
        self.current.load(Ordering::Relaxed)
    }

    pub fn peak_bytes(&self) -> usize {
        self.peak.load(Ordering::Relaxed)
    }

    /// Restarts peak tracking from the current footprint.
    pub fn reset_peak(&self) {
        self.peak.store(self.current_bytes(), Ordering::Relaxed);
    }

    fn grow(&self, size: usize) {
        let now = self.current.fetch_add(size, Ordering::Relaxed) + size;
        self.peak.fetch_max(now, Ordering::Relaxed);
    }
}

impl Default for PeakAllocator {
    fn default() -> Self {
        Self::new()
    }
}

unsafe impl GlobalAlloc for PeakAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            self.grow(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            self.grow(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        self.current.fetch_sub(layout.size(), Ordering::Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            self.current.fetch_sub(layout.size(), Ordering::Relaxed);
            self.grow(new_size);
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchKernel {
    /// Sparse continuous k-NN kernels with the Lanczos solver.
    #[default]
    Knn,
    /// Dense Gaussian kernels (0.3 x median bandwidth), dense eigensolver.
    Gaussian,
}

/// Parameters of one benchmark fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub kernel: BenchKernel,
    pub k: usize,
    pub delta: f64,
    pub functions: usize,
    /// Relative eigen-residual tolerance.
    pub tol: f64,
    pub krylov_dim: Option<usize>,
    pub seed: u64,
    /// Rows whose estimated footprint exceeds this many bytes are skipped.
    pub memory_limit: Option<usize>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            kernel: BenchKernel::Knn,
            k: 25,
            delta: 1.0,
            functions: 10,
            tol: 1e-6,
            krylov_dim: None,
            seed: 0,
            memory_limit: None,
        }
    }
}

impl BenchConfig {
    /// Rough upper estimate of the heap needed by one fit.
    pub fn estimated_bytes(&self, n: usize, d: usize) -> usize {
        let krylov = self.krylov_dim.unwrap_or((2 * d + 1).max(d + 32)) + 1;
        match self.kernel {
            BenchKernel::Knn => 8 * n * (2 * (2 * self.k + 1) * 2 + 2 * d + krylov + self.functions + 8),
            BenchKernel::Gaussian => 8 * n * (2 * n + 2 * d + self.functions + 8),
        }
    }
}

/// Wall-clock breakdown of one fit, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitTiming {
    pub generate: f64,
    pub kernels: f64,
    pub eigen: f64,
    pub jsf: f64,
}

impl FitTiming {
    /// Everything except data generation.
    pub fn fit(&self) -> f64 {
        self.kernels + self.eigen + self.jsf
    }
}

/// Generates an `n`-point toy and fits `d` eigenvectors per kernel and the
/// leading jointly smooth functions.
pub fn run_fit(n: usize, d: usize, cfg: &BenchConfig) -> Result<FitTiming> {
    if cfg.kernel == BenchKernel::Gaussian && n > MAX_DENSE_BENCH_N {
        return Err(Error::arg(format!(
            "dense Gaussian path is limited to N <= {MAX_DENSE_BENCH_N} (asked for {n})"
        )));
    }
    let t = Instant::now();
    let sample = generate_toy(n, cfg.seed)?;
    let generate = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let kernels = sample
        .views
        .iter()
        .map(|v| match cfg.kernel {
            BenchKernel::Knn => knn_kernel(v, cfg.k, cfg.delta),
            BenchKernel::Gaussian => gaussian_kernel(v, median_bandwidth(v, 0.3)?),
        })
        .collect::<Result<Vec<_>>>()?;
    let kernel_time = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let opts = EigenOptions {
        method: match cfg.kernel {
            BenchKernel::Knn => EigenMethod::Lanczos,
            BenchKernel::Gaussian => EigenMethod::Auto,
        },
        tol: cfg.tol,
        krylov_dim: cfg.krylov_dim,
        seed: cfg.seed,
        ..EigenOptions::default()
    };
    let bases = kernels
        .iter()
        .map(|k| top_eigenbasis_with(k, d, &opts))
        .collect::<Result<Vec<_>>>()?;
    drop(kernels);
    let eigen = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let model = jsf_two_view_with(&bases[0], &bases[1], cfg.functions)?;
    let jsf = t.elapsed().as_secs_f64();
    debug_assert!(model.max_functions() <= cfg.functions);
    Ok(FitTiming {
        generate,
        kernels: kernel_time,
        eigen,
        jsf,
    })
}

/// One row of a benchmark table. Failed rows carry the error and no timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub n: usize,
    pub d: usize,
    pub repetition: usize,
    pub timing: Option<FitTiming>,
    /// Peak heap growth during the repetition, when an allocator is tracked.
    pub peak_bytes: Option<usize>,
    pub error: Option<String>,
}

/// Runs one small fit so that lazily allocated, process-wide buffers of the
/// linear algebra backend are in place before anything is measured.
pub fn warm_up(cfg: &BenchConfig) -> Result<()> {
    let small = BenchConfig {
        kernel: BenchKernel::Knn,
        ..*cfg
    };
    run_fit(2000, 50, &small).map(|_| ())
}

/// Runs `repetitions` fits for every `(n, d)` pair after a warm-up. A row
/// that fails or exceeds the memory limit is recorded and the run goes on.
pub fn run_bench(
    ns: &[usize],
    ds: &[usize],
    repetitions: usize,
    cfg: &BenchConfig,
    alloc: Option<&PeakAllocator>,
) -> Result<Vec<BenchRecord>> {
    warm_up(cfg)?;
    let mut out = Vec::with_capacity(ns.len() * ds.len() * repetitions);
    for &n in ns {
        for &d in ds {
            for repetition in 0..repetitions {
                let mut row = BenchRecord {
                    n,
                    d,
                    repetition,
                    timing: None,
                    peak_bytes: None,
                    error: None,
                };
                let need = cfg.estimated_bytes(n, d);
                if let Some(limit) = cfg.memory_limit.filter(|&l| need > l) {
                    row.error = Some(format!("estimated {need} bytes exceeds the limit of {limit}"));
                    log::warn!(
                        "bench n={n} d={d} skipped: {}",
                        row.error.as_deref().unwrap_or_default()
                    );
                    out.push(row);
                    continue;
                }
                let base = alloc.map(|a| {
                    a.reset_peak();
                    a.current_bytes()
                });
                match run_fit(n, d, cfg) {
                    Ok(t) => {
                        log::info!("bench n={n} d={d} rep={repetition} fit={:.3}s", t.fit());
                        row.timing = Some(t);
                        row.peak_bytes = alloc.zip(base).map(|(a, b)| a.peak_bytes().saturating_sub(b));
                    }
                    Err(e) => {
                        log::warn!("bench n={n} d={d} rep={repetition} failed: {e}");
                        row.error = Some(e.to_string());
                    }
                }
                out.push(row);
            }
        }
    }
    Ok(out)
}

/// Least-squares line `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    /// Largest `|residual| / y` over the points.
    pub max_relative_residual: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::arg("need at least two paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("x values are all equal"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_relative_residual = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| ((intercept + slope * x - y) / y).abs())
        .fold(0.0, f64::max);
    Ok(LinearFit {
        intercept,
        slope,
        max_relative_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_line() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 1.0, epsilon = 1e-12);
        assert!(f.max_relative_residual < 1e-12);
    }

    #[test]
    fn bench_table_shape() {
        let rows = run_bench(&[300, 400], &[8], 2, &BenchConfig::default(), None).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows
            .iter()
            .all(|r| r.peak_bytes.is_none() && r.timing.unwrap().fit() > 0.0));
        assert_eq!((rows[3].n, rows[3].repetition), (400, 1));
    }

    #[test]
    fn guarded_rows_fail_and_run_continues() {
        let cfg = BenchConfig {
            kernel: BenchKernel::Gaussian,
            ..BenchConfig::default()
        };
        let rows = run_bench(&[MAX_DENSE_BENCH_N + 1, 200], &[8], 1, &cfg, None).unwrap();
        assert!(rows[0].error.is_some() && rows[0].timing.is_none());
        assert!(rows[1].error.is_none() && rows[1].timing.is_some());

        let tight = BenchConfig {
            memory_limit: Some(1000),
            ..BenchConfig::default()
        };
        let rows = run_bench(&[300], &[8], 1, &tight, None).unwrap();
        assert!(rows[0].error.as_deref().unwrap().contains("exceeds"));
    }

    #[test]
    fn small_fit_runs() {
        let t = run_fit(400, 10, &BenchConfig::default()).unwrap();
        assert!(t.fit() > 0.0);
    }
}
