use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jointsmooth::extension::ExtensionMode;
use jointsmooth::jsf::JackstrawRoute;
use jointsmooth::EigenMethod;

use crate::config::ThresholdMode;

#[derive(Debug, Parser)]
#[command(name = "jointsmooth", version, about = "Jointly smooth functions of multi-view data")]
pub struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic multi-view dataset.
    Generate(GenerateArgs),
    /// Fit jointly smooth functions to aligned views.
    Fit(FitArgs),
    /// Compute the score threshold E0 without fitting.
    Threshold(ThresholdArgs),
    /// Choose the number of significant functions of a saved model.
    Select(SelectArgs),
    /// Extend a saved model to new rows read line by line.
    Extend(ExtendArgs),
    /// Diffusion-maps coordinates of the selected functions.
    Embed(EmbedArgs),
    /// Time and memory scaling table of the sparse pipeline.
    Bench(BenchArgs),
    /// PCA and delay-embedding feature transforms.
    Preprocess(PreprocessArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenerateKind {
    /// Spiral and torus views of a common z.
    Toy,
    /// The toy plus a circle-of-z view.
    ThreeView,
    /// Annulus and torus views of a periodic z.
    Periodic,
    /// Parameter and steady-state views of the airplane system.
    Airplane,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(value_enum)]
    pub kind: GenerateKind,
    /// Training samples.
    #[arg(long)]
    pub n: usize,
    /// Extra samples written separately for out-of-sample tests.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Airplane integrator step.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Airplane integration horizon.
    #[arg(long, default_value_t = 200.0)]
    pub t_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Gaussian,
    Knn,
}

/// Flags shared by every command that reads a run config.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// JSON run config; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// View CSV file (repeat once per view, in order).
    #[arg(long = "view")]
    pub views: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelKind>,
    /// Gaussian bandwidth as a multiple of the median pairwise distance.
    #[arg(long)]
    pub bandwidth_factor: Option<f64>,
    /// Fixed Gaussian bandwidth.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Neighbours of the k-NN kernel.
    #[arg(long)]
    pub k: Option<usize>,
    /// Scale of the k-NN kernel.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Eigenvectors per view.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub max_functions: Option<usize>,
    #[arg(long, value_enum)]
    pub threshold: Option<ThresholdMode>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long, value_parser = parse_route)]
    pub jackstraw_route: Option<JackstrawRoute>,
    #[arg(long, value_parser = parse_method)]
    pub eigen_method: Option<EigenMethod>,
    #[arg(long)]
    pub eigen_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn parse_route(s: &str) -> Result<JackstrawRoute, String> {
    match s {
        "rebuild" => Ok(JackstrawRoute::Rebuild),
        "permute-basis" => Ok(JackstrawRoute::PermuteBasis),
        _ => Err(format!("unknown route {s:?} (expected rebuild or permute-basis)")),
    }
}

fn parse_method(s: &str) -> Result<EigenMethod, String> {
    match s {
        "auto" => Ok(EigenMethod::Auto),
        "lanczos" => Ok(EigenMethod::Lanczos),
        "dense" => Ok(EigenMethod::Dense),
        _ => Err(format!("unknown eigen method {s:?} (expected auto, lanczos or dense)")),
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Ground-truth column; writes plot_truth.csv pairing it with the functions.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Analytic threshold for this many samples and `--d`, without reading data.
    #[arg(long, requires = "d")]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Model directory written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Keep the leading functions whose minimum score exceeds this value.
    #[arg(long, conflicts_with = "m")]
    pub threshold: Option<f64>,
    /// Keep exactly this many functions.
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Normalized,
    Mean,
}

impl From<ModeArg> for ExtensionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Normalized => ExtensionMode::Normalized,
            ModeArg::Mean => ExtensionMode::Mean,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExtendArgs {
    /// Model directory written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Run config to check against the model; defaults to the copy saved by `fit`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input rows (all views concatenated); `-` reads stdin.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// Output file; `-` writes stdout.
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Normalized)]
    pub mode: ModeArg,
    /// Number of leading functions to emit; defaults to the selected M.
    #[arg(long)]
    pub functions: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    /// Model directory written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// Diffusion coordinates to keep.
    #[arg(long, default_value_t = 2)]
    pub coords: usize,
    /// Leading functions used as features; defaults to the selected M.
    #[arg(long)]
    pub functions: Option<usize>,
    /// Gaussian bandwidth; 0.3 x median distance when absent.
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Ground-truth column; writes plot_embedding.csv next to the coordinates.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Output directory; defaults to the model directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BenchKernelArg {
    Knn,
    Gaussian,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sample counts, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [10000, 20000, 40000])]
    pub n: Vec<usize>,
    /// Basis sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [100])]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub repetitions: usize,
    #[arg(long, value_enum, default_value_t = BenchKernelArg::Knn)]
    pub kernel: BenchKernelArg,
    #[arg(long, default_value_t = 25)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
    /// Jointly smooth functions per fit.
    #[arg(long, default_value_t = 10)]
    pub functions: usize,
    /// Relative eigen-residual tolerance.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip rows estimated to need more bytes than this; defaults to the
    /// memory the system reports as available.
    #[arg(long)]
    pub memory_limit: Option<usize>,
    /// Output CSV; `-` writes stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

/// One transform of a preprocessing chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Pca(usize),
    Delay(usize),
}

impl FromStr for Step {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, value) = s
            .split_once(':')
            .ok_or_else(|| format!("step {s:?} must look like pca:<q> or delay:<h>"))?;
        let value: usize = value
            .parse()
            .map_err(|_| format!("step {s:?} needs an integer argument"))?;
        match name {
            "pca" => Ok(Step::Pca(value)),
            "delay" => Ok(Step::Delay(value)),
            _ => Err(format!("unknown step {name:?} (expected pca or delay)")),
        }
    }
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Transform applied in order, e.g. `--step pca:10 --step delay:150 --step pca:5`.
    #[arg(long = "step", required = true)]
    pub steps: Vec<Step>,
}
