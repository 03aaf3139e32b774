use jointsmooth::embed::diffusion_maps;
use jointsmooth::io::{read_vector_csv, write_json, write_matrix_csv, write_rows_csv};
use jointsmooth::jsf::JsfModel;
use serde::Serialize;

use crate::args::EmbedArgs;
use crate::error::{CliError, CliResult};

#[derive(Serialize)]
struct EmbedSummary {
    functions: usize,
    coords: usize,
    bandwidth: f64,
    eigenvalues: Vec<f64>,
}

pub fn run(args: &EmbedArgs) -> CliResult<()> {
    let model = JsfModel::load(&args.model)?;
    let functions = args.functions.unwrap_or(model.m());
    if functions == 0 || functions > model.max_functions() {
        return Err(CliError::Usage(format!(
            "need between 1 and {} functions, got {functions} (run select first, or pass --functions)",
            model.max_functions()
        )));
    }
    let truth = args.truth.as_deref().map(read_vector_csv).transpose()?;
    if let Some(t) = &truth {
        if t.len() != model.n() {
            return Err(CliError::Data(format!(
                "truth has {} rows, model has {}",
                t.len(),
                model.n()
            )));
        }
    }
    let emb = diffusion_maps(model.functions().subcols(0, functions), args.coords, args.bandwidth)?;

    let out = args.out_dir.clone().unwrap_or_else(|| args.model.clone());
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    write_matrix_csv(out.join("embedding.csv"), emb.coordinates().as_ref())?;
    write_json(
        out.join("embedding.json"),
        &EmbedSummary {
            functions,
            coords: emb.m(),
            bandwidth: emb.bandwidth(),
            eigenvalues: emb.eigenvalues().to_vec(),
        },
    )?;
    if let Some(t) = &truth {
        let mut header = vec!["sample".to_string(), "truth".to_string()];
        header.extend((1..=emb.m()).map(|c| format!("phi_{c}")));
        let rows: Vec<Vec<f64>> = t
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let mut r = vec![i as f64, z];
                r.extend((0..emb.m()).map(|c| emb.coordinates()[(i, c)]));
                r
            })
            .collect();
        write_rows_csv(
            out.join("plot_embedding.csv"),
            rows.iter().map(Vec::as_slice),
            Some(&header),
        )?;
    }
    crate::emit(&format!(
        "{} diffusion coordinates of {functions} functions (bandwidth {:.6}) written to {}\n",
        emb.m(),
        emb.bandwidth(),
        out.display()
    ))
}
