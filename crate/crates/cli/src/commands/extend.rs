use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, LineWriter, Write};
use std::path::Path;

use jointsmooth::data::parse_csv_line;
use jointsmooth::extension::{build_extender, ExtensionMode};
use jointsmooth::io::write_row;
use jointsmooth::jsf::JsfModel;
use jointsmooth::SpectralBasis;

use crate::args::ExtendArgs;
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::pipeline::prepare;

/// Loads the model and its training views and checks they belong together.
pub fn load_extender(
    model_dir: &Path,
    config: Option<&Path>,
) -> CliResult<(JsfModel, jointsmooth::extension::ExtensionModel)> {
    let model = JsfModel::load(model_dir)?;
    let config_path = config
        .map(Path::to_path_buf)
        .unwrap_or_else(|| model_dir.join("config.json"));
    let config = RunConfig::load(&config_path)?;
    config.validate()?;
    if config.views.len() != model.views() {
        return Err(CliError::Usage(format!(
            "config lists {} views, model has {}",
            config.views.len(),
            model.views()
        )));
    }
    let prep = prepare(&RunConfig {
        d: Some(model.d()),
        ..config.clone()
    })?;
    for (k, (resolved, stored)) in prep.params.iter().zip(model.kernel_params()).enumerate() {
        if resolved != stored {
            return Err(CliError::Data(format!(
                "kernel of view {} ({}) is {resolved:?} under the config but {stored:?} in the model; refusing to extend",
                k,
                config.views[k].display()
            )));
        }
    }
    let bases = (0..model.views())
        .map(|k| SpectralBasis::load(model_dir.join(format!("basis_{k}"))))
        .collect::<jointsmooth::Result<Vec<_>>>()?;
    let ext = build_extender(&model, &bases, &prep.datasets)?;
    Ok((model, ext))
}

pub fn run(args: &ExtendArgs) -> CliResult<()> {
    let (model, ext) = load_extender(&args.model, args.config.as_deref())?;
    let count = args.functions.unwrap_or(model.m());
    if count == 0 || count > ext.m() {
        return Err(CliError::Usage(format!(
            "--functions must lie in 1..={}, got {count}",
            ext.m()
        )));
    }
    let mode = ExtensionMode::from(args.mode);

    let input: Box<dyn BufRead> = if args.input.as_os_str() == "-" {
        Box::new(std::io::stdin().lock())
    } else {
        Box::new(BufReader::new(
            File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?,
        ))
    };
    let mut output: Box<dyn Write> = if args.output.as_os_str() == "-" {
        Box::new(LineWriter::new(std::io::stdout().lock()))
    } else {
        Box::new(BufWriter::new(
            File::create(&args.output).map_err(|e| CliError::io(&args.output, e))?,
        ))
    };
    let failed = stream(input, &mut output, |row| {
        Ok(ext.extend_concatenated(row, mode)?[..count].to_vec())
    })
    .map_err(|e| CliError::io(&args.output, e))?;
    output.flush().map_err(|e| CliError::io(&args.output, e))?;
    if failed > 0 {
        return Err(CliError::Data(format!("{failed} input line(s) could not be extended")));
    }
    Ok(())
}

/// Extends each non-blank line; a bad line is reported on stderr and
/// skipped. Returns the number of skipped lines.
pub fn stream<R, W, F>(input: R, output: &mut W, mut extend: F) -> std::io::Result<usize>
where
    R: BufRead,
    W: Write,
    F: FnMut(&[f64]) -> jointsmooth::Result<Vec<f64>>,
{
    let mut failed = 0;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_csv_line(&line).and_then(|row| extend(&row)) {
            Ok(values) => write_row(output, &values)?,
            Err(jointsmooth::Error::Parse { message, .. }) => {
                failed += 1;
                eprintln!("line {}: {message}", i + 1);
            }
            Err(e) => {
                failed += 1;
                eprintln!("line {}: {e}", i + 1);
            }
        }
    }
    Ok(failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bad_lines_are_skipped() {
        let input = "1,2\nx,3\n\n4,5\n1\n".as_bytes();
        let mut out = Vec::new();
        let failed = stream(input, &mut out, |r| {
            if r.len() == 2 {
                Ok(vec![r[0] + r[1]])
            } else {
                Err(jointsmooth::Error::DimensionMismatch("want 2".into()))
            }
        })
        .unwrap();
        assert_eq!(failed, 2);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
    }
}
