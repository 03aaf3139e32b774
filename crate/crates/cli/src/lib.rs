//! Command-line front end of `jointsmooth`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

use std::ffi::OsString;

use clap::Parser;
use jointsmooth::bench::PeakAllocator;

use crate::args::{Cli, Command};
use crate::error::{CliResult, EXIT_OK, EXIT_USAGE};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "JOINTSMOOTH_THREADS";

fn configure_threads() -> CliResult<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize =
        value.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            error::CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {value:?}"))
        })?;
    // a second call in the same process (tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    faer::set_global_parallelism(if n == 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
    Ok(())
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp_millis()
        .try_init();
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I, alloc: Option<&PeakAllocator>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    match configure_threads().and_then(|_| dispatch(&cli.command, alloc)) {
        Ok(()) => EXIT_OK,
        Err(e) if e.is_broken_pipe() => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Writes to stdout; a closed pipe surfaces as an error that `run` treats as
/// a normal end of output.
pub(crate) fn emit(text: &str) -> CliResult<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| error::CliError::io("stdout", e))
}

fn dispatch(command: &Command, alloc: Option<&PeakAllocator>) -> CliResult<()> {
    match command {
        Command::Generate(a) => commands::generate::run(a),
        Command::Fit(a) => commands::fit::run_fit(a),
        Command::Threshold(a) => commands::fit::run_threshold(a),
        Command::Select(a) => commands::fit::run_select(a),
        Command::Extend(a) => commands::extend::run(a),
        Command::Embed(a) => commands::embed::run(a),
        Command::Bench(a) => commands::bench::run(a, alloc),
        Command::Preprocess(a) => commands::preprocess::run(a),
    }
}
