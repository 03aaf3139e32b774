use std::fmt::Write as _;
use std::path::Path;

use jointsmooth::io::{read_vector_csv, write_json, write_rows_csv};
use jointsmooth::jsf::{
    analytic_threshold, default_max_functions, jsf_multi_view_with, jsf_two_view_with, select_m, JackstrawRoute,
    JsfModel,
};
use jointsmooth::KernelParams;

use crate::args::{FitArgs, SelectArgs, ThresholdArgs};
use crate::config::{RunConfig, ThresholdMode};
use crate::error::{CliError, CliResult};
use crate::pipeline::{
    absolute_views, assemble_config, compute_bases, compute_basis, compute_threshold, eigen_options, prepare,
    ThresholdReport,
};

pub fn run_fit(args: &FitArgs) -> CliResult<()> {
    let mut config = assemble_config(&args.config)?;
    let truth = args.truth.as_deref().map(read_vector_csv).transpose()?;
    let prep = prepare(&config)?;
    if let Some(t) = &truth {
        if t.len() != prep.n() {
            return Err(CliError::Data(format!(
                "truth has {} rows, views have {}",
                t.len(),
                prep.n()
            )));
        }
    }
    let bases = compute_bases(&config, &prep)?;
    let max = config.max_functions.unwrap_or_else(|| default_max_functions(prep.d));
    let mut model = if bases.len() == 2 {
        jsf_two_view_with(&bases[0], &bases[1], max)?
    } else {
        jsf_multi_view_with(&bases, Some(max), &eigen_options(&config))?
    };
    let report = compute_threshold(&config, &prep, &bases)?;
    match &report {
        Some(r) => {
            select_m(&mut model, r.threshold)?;
        }
        None => model.set_m(model.max_functions())?,
    }

    let out = config.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    model.save(&out)?;
    for (k, b) in bases.iter().enumerate() {
        b.save(out.join(format!("basis_{k}")))?;
    }
    config.views = absolute_views(&config)?;
    std::fs::write(out.join("config.json"), config.to_json() + "\n").map_err(|e| CliError::io(&out, e))?;
    if let Some(r) = &report {
        write_json(out.join("threshold.json"), r)?;
    }
    if let Some(t) = &truth {
        write_truth_plot(&out.join("plot_truth.csv"), &model, t)?;
    }
    let summary = summary(&config, &model, report.as_ref());
    std::fs::write(out.join("summary.txt"), &summary).map_err(|e| CliError::io(&out, e))?;
    crate::emit(&summary)
}

/// Wide table `sample, truth, f_0, ...` over the selected functions (the
/// first ten when none are selected).
fn write_truth_plot(path: &Path, model: &JsfModel, truth: &[f64]) -> CliResult<()> {
    let count = if model.m() > 0 {
        model.m()
    } else {
        model.max_functions().min(10)
    };
    let mut header = vec!["sample".to_string(), "truth".to_string()];
    header.extend((0..count).map(|c| format!("f_{c}")));
    let rows: Vec<Vec<f64>> = truth
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut r = vec![i as f64, t];
            r.extend((0..count).map(|c| model.function(c)[i]));
            r
        })
        .collect();
    write_rows_csv(path, rows.iter().map(Vec::as_slice), Some(&header))?;
    Ok(())
}

fn describe_kernel(p: &KernelParams) -> String {
    match p {
        KernelParams::Gaussian { bandwidth } => format!("gaussian bandwidth={bandwidth:.6}"),
        KernelParams::KnnContinuous { k, delta } => format!("knn k={k} delta={delta}"),
        KernelParams::Precomputed => "precomputed".into(),
    }
}

fn summary(config: &RunConfig, model: &JsfModel, report: Option<&ThresholdReport>) -> String {
    let mut s = String::new();
    let names: Vec<String> = config.views.iter().map(|p| p.display().to_string()).collect();
    let _ = writeln!(s, "views       {}", model.views());
    for (name, p) in names.iter().zip(model.kernel_params()) {
        let _ = writeln!(s, "  {name}: {}", describe_kernel(p));
    }
    let _ = writeln!(
        s,
        "N {}  d {}  functions {}",
        model.n(),
        model.d(),
        model.max_functions()
    );
    match report {
        Some(r) => {
            let _ = write!(s, "threshold   {:?} E0 = {:.6}", r.mode, r.threshold);
            if !r.gammas.is_empty() {
                let worst = r.gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let _ = write!(s, " (permutations {}, max gamma_2 {:.6})", r.gammas.len(), worst);
            }
            let _ = writeln!(s);
        }
        None => {
            let _ = writeln!(s, "threshold   none");
        }
    }
    let _ = writeln!(s, "selected    M = {}", model.m());
    let _ = writeln!(s);
    let mut head = format!("{:>4} {:>10}", "m", "sigma");
    for k in 0..model.views() {
        let _ = write!(head, " {:>10}", format!("score_{k}"));
    }
    let _ = writeln!(s, "{head} {:>10}", "min");
    let shown = model.max_functions().min((model.m() + 5).max(10));
    for (c, min) in model.min_scores().iter().enumerate().take(shown) {
        let _ = write!(s, "{c:>4} {:>10.6}", model.singular_values()[c]);
        for k in 0..model.views() {
            let _ = write!(s, " {:>10.6}", model.scores(k)[c]);
        }
        let _ = writeln!(s, " {min:>10.6}");
    }
    s
}

pub fn run_threshold(args: &ThresholdArgs) -> CliResult<()> {
    let report = if let Some(n) = args.n {
        let d = args.config.d.expect("clap enforces --d with --n");
        ThresholdReport {
            mode: ThresholdMode::Analytic,
            threshold: analytic_threshold(n, d)?,
            gammas: Vec::new(),
        }
    } else {
        let config = assemble_config(&args.config)?;
        let prep = prepare(&config)?;
        let bases = match (config.threshold, config.jackstraw_route) {
            (ThresholdMode::Jackstraw, JackstrawRoute::Rebuild) if prep.datasets.len() == 2 => {
                vec![compute_basis(&config, &prep, 0)?]
            }
            (ThresholdMode::Jackstraw, JackstrawRoute::PermuteBasis) if prep.datasets.len() == 2 => {
                compute_bases(&config, &prep)?
            }
            _ => Vec::new(),
        };
        match compute_threshold(&config, &prep, &bases)? {
            Some(r) => r,
            None => return Err(CliError::Usage("threshold mode is none; nothing to compute".into())),
        }
    };
    crate::emit(&(serde_json::to_string_pretty(&report).expect("report serialises") + "\n"))
}

pub fn run_select(args: &SelectArgs) -> CliResult<()> {
    let mut model = JsfModel::load(&args.model)?;
    match (args.threshold, args.m) {
        (Some(e0), None) => {
            select_m(&mut model, e0)?;
        }
        (None, Some(m)) => model.set_m(m)?,
        _ => return Err(CliError::Usage("pass exactly one of --threshold or --m".into())),
    }
    write_json(args.model.join("manifest.json"), &model.manifest())?;
    let mut text = format!("M = {}\n", model.m());
    for (c, s) in model.min_scores().iter().enumerate().take(model.m() + 1) {
        let _ = writeln!(text, "{c:>4} {s:.6}");
    }
    crate::emit(&text)
}
