use std::path::Path;

use jointsmooth::io::{write_json, write_rows_csv, write_vector_csv};
use jointsmooth::synthetic::{
    generate_airplane, generate_periodic_toy, generate_toy, generate_toy_three_view, Integrator, MultiViewSample,
};
use serde::Serialize;

use crate::args::{GenerateArgs, GenerateKind};
use crate::error::{CliError, CliResult};

#[derive(Serialize)]
struct ViewFile {
    id: String,
    file: String,
    dim: usize,
}

#[derive(Serialize)]
struct Provenance<'a> {
    generator: &'a str,
    version: &'a str,
    kind: &'a str,
    n: usize,
    holdout: usize,
    seed: u64,
    views: Vec<ViewFile>,
    truth: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    heldout: Option<HeldOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    integrator: Option<Integrator>,
}

#[derive(Serialize)]
struct HeldOut {
    views: Vec<String>,
    query: String,
    truth: String,
}

pub fn run(args: &GenerateArgs) -> CliResult<()> {
    let total = args.n + args.holdout;
    let integrator = Integrator {
        dt: args.dt,
        t_max: args.t_max,
        ..Integrator::default()
    };
    let (kind, sample) = match args.kind {
        GenerateKind::Toy => ("toy", generate_toy(total, args.seed)?),
        GenerateKind::ThreeView => ("three-view", generate_toy_three_view(total, args.seed)?),
        GenerateKind::Periodic => ("periodic", generate_periodic_toy(total, args.seed)?),
        GenerateKind::Airplane => ("airplane", generate_airplane(total, args.seed, &integrator)?),
    };
    let (train, test) = if args.holdout > 0 {
        let (a, b) = sample.split_tail(args.holdout)?;
        (a, Some(b))
    } else {
        (sample, None)
    };

    let dir = &args.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let views = write_views(dir, &train, "")?;
    write_vector_csv(dir.join("truth.csv"), &train.truth)?;
    let heldout = match &test {
        Some(t) => {
            let files = write_views(dir, t, "heldout_")?;
            let query: Vec<Vec<f64>> = (0..t.truth.len())
                .map(|i| t.views.iter().flat_map(|v| v.row(i).iter().copied()).collect())
                .collect();
            write_rows_csv(dir.join("heldout_query.csv"), query.iter().map(Vec::as_slice), None)?;
            write_vector_csv(dir.join("heldout_truth.csv"), &t.truth)?;
            Some(HeldOut {
                views: files.into_iter().map(|v| v.file).collect(),
                query: "heldout_query.csv".into(),
                truth: "heldout_truth.csv".into(),
            })
        }
        None => None,
    };
    let prov = Provenance {
        generator: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        kind,
        n: args.n,
        holdout: args.holdout,
        seed: args.seed,
        views,
        truth: "truth.csv",
        heldout,
        integrator: (args.kind == GenerateKind::Airplane).then_some(integrator),
    };
    write_json(dir.join("generate.json"), &prov)?;
    crate::emit(&format!(
        "wrote {} views of {} rows to {}\n",
        train.views.len(),
        args.n,
        dir.display()
    ))
}

fn write_views(dir: &Path, sample: &MultiViewSample, prefix: &str) -> CliResult<Vec<ViewFile>> {
    sample
        .views
        .iter()
        .map(|v| {
            let file = format!("{prefix}{}.csv", v.view_id());
            v.write_csv(dir.join(&file))?;
            Ok(ViewFile {
                id: v.view_id().to_string(),
                file,
                dim: v.dim(),
            })
        })
        .collect()
}
