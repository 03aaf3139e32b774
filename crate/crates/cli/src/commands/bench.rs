use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};

use jointsmooth::bench::{linear_fit, run_bench, BenchConfig, BenchKernel, BenchRecord, PeakAllocator};

use crate::args::{BenchArgs, BenchKernelArg};
use crate::error::{CliError, CliResult};

/// `MemAvailable` from `/proc/meminfo`, in bytes.
fn available_memory() -> Option<usize> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: usize = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

pub fn run(args: &BenchArgs, alloc: Option<&PeakAllocator>) -> CliResult<()> {
    if args.n.is_empty() || args.d.is_empty() || args.repetitions == 0 {
        return Err(CliError::Usage("need at least one N, one d and one repetition".into()));
    }
    if let Some(&d) = args.d.iter().find(|&&d| args.n.iter().any(|&n| d >= n)) {
        return Err(CliError::Usage(format!("d = {d} is not smaller than every N")));
    }
    let kernel = match args.kernel {
        BenchKernelArg::Knn => BenchKernel::Knn,
        BenchKernelArg::Gaussian => BenchKernel::Gaussian,
    };
    let cfg = BenchConfig {
        kernel,
        k: args.k,
        delta: args.delta,
        functions: args.functions,
        tol: args.tol,
        krylov_dim: None,
        seed: args.seed,
        memory_limit: args.memory_limit.or_else(available_memory),
    };
    let records = run_bench(&args.n, &args.d, args.repetitions, &cfg, alloc)?;

    let kernel_name = match kernel {
        BenchKernel::Knn => "knn",
        BenchKernel::Gaussian => "gaussian",
    };
    let write = |out: &mut dyn Write| write_table(out, kernel_name, &records);
    if args.out.as_os_str() == "-" {
        write(&mut std::io::stdout().lock())
    } else {
        let mut f = BufWriter::new(File::create(&args.out).map_err(|e| CliError::io(&args.out, e))?);
        write(&mut f).and_then(|_| f.flush())
    }
    .map_err(|e| CliError::io(&args.out, e))?;
    report(&records);
    Ok(())
}

fn write_table(out: &mut dyn Write, kernel: &str, records: &[BenchRecord]) -> std::io::Result<()> {
    writeln!(
        out,
        "kernel,n,d,repetition,status,generate_s,kernels_s,eigen_s,jsf_s,fit_s,peak_bytes,error"
    )?;
    for r in records {
        let status = if r.timing.is_some() { "ok" } else { "failed" };
        let times = match &r.timing {
            Some(t) => format!(
                "{:.6},{:.6},{:.6},{:.6},{:.6}",
                t.generate,
                t.kernels,
                t.eigen,
                t.jsf,
                t.fit()
            ),
            None => ",,,,".to_string(),
        };
        let peak = r.peak_bytes.map(|b| b.to_string()).unwrap_or_default();
        let err = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        let err = if err.is_empty() { err } else { format!("\"{err}\"") };
        writeln!(
            out,
            "{kernel},{},{},{},{status},{times},{peak},{err}",
            r.n, r.d, r.repetition
        )?;
    }
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Median time per N with the ratio to the previous N, and a linear fit of
/// the median peak memory, on stderr.
fn report(records: &[BenchRecord]) {
    let mut by_key: BTreeMap<(usize, usize), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in records {
        if let Some(t) = &r.timing {
            let e = by_key.entry((r.d, r.n)).or_default();
            e.0.push(t.fit());
            if let Some(b) = r.peak_bytes {
                e.1.push(b as f64);
            }
        }
    }
    let mut current_d = None;
    let mut prev: Option<(usize, f64)> = None;
    let mut mem_points: Vec<(f64, f64)> = Vec::new();
    let flush_mem = |d: usize, pts: &mut Vec<(f64, f64)>| {
        if pts.len() >= 2 {
            let (xs, ys): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
            if let Ok(f) = linear_fit(&xs, &ys) {
                eprintln!(
                    "d={d}: peak bytes ~ {:.0} + {:.1} N (max relative residual {:.3})",
                    f.intercept, f.slope, f.max_relative_residual
                );
            }
        }
        pts.clear();
    };
    for ((d, n), (times, mems)) in by_key {
        if current_d != Some(d) {
            if let Some(old) = current_d {
                flush_mem(old, &mut mem_points);
            }
            current_d = Some(d);
            prev = None;
        }
        let t = median(times);
        let ratio = prev
            .map(|(pn, pt)| format!("  x{:.2} over N={pn}", t / pt))
            .unwrap_or_default();
        eprintln!("d={d} N={n}: median fit {t:.3}s{ratio}");
        prev = Some((n, t));
        if !mems.is_empty() {
            mem_points.push((n as f64, median(mems)));
        }
    }
    if let Some(d) = current_d {
        flush_mem(d, &mut mem_points);
    }
}
