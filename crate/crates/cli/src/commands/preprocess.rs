use jointsmooth::preprocess::{delay_embed, pca_fit};

use crate::args::{PreprocessArgs, Step};
use crate::error::CliResult;
use crate::pipeline::{read_view, view_id};

pub fn run(args: &PreprocessArgs) -> CliResult<()> {
    let mut data = read_view(&args.input)?;
    for step in &args.steps {
        data = match *step {
            Step::Pca(q) => {
                let map = pca_fit(&data, q)?;
                let total: f64 = map.explained().iter().sum();
                log::info!("pca:{q} explains {total:.4} of the variance");
                map.apply(&data)?
            }
            Step::Delay(h) => delay_embed(&data, h)?,
        };
        log::info!("{step:?}: {} rows x {} columns", data.n(), data.dim());
    }
    let (n, dim) = (data.n(), data.dim());
    data.with_view_id(view_id(&args.output)).write_csv(&args.output)?;
    crate::emit(&format!(
        "{n} rows x {dim} columns written to {}\n",
        args.output.display()
    ))
}
