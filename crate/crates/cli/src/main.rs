//! `xtsi`: command-line front end for the measurement model and its bounds.
//! Subcommands cover material-statistics caching, the photon-budget sweep,
//! Monte Carlo oracle validation, detector bin balancing, and the
//! correlated-vs-decorrelated noise ellipsoid comparison.

mod cache;
mod commands;
mod manifest;
mod plots;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xtsi_core::{CorrelationMode, ModelVariant};

#[derive(Parser)]
#[command(
    name = "xtsi",
    version,
    about = "Information and error-probability bounds for energy-binned X-ray screening",
    propagate_version = true
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
pub struct GlobalArgs {
    /// Scenario configuration file (`scan { ... }`); built-in defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub(crate) config: Option<PathBuf>,

    /// Material library file.
    #[arg(
        long,
        global = true,
        value_name = "FILE",
        default_value = "data/synthetic_library.mlib"
    )]
    pub(crate) library: PathBuf,

    /// Source spectrum CSV.
    #[arg(
        long,
        global = true,
        value_name = "FILE",
        default_value = "data/spectrum_kramers.csv"
    )]
    pub(crate) spectrum: PathBuf,

    /// Element mass-attenuation table directory; `elements/` beside the
    /// library when omitted.
    #[arg(long, global = true, value_name = "DIR")]
    pub(crate) elements: Option<PathBuf>,

    /// Output directory, created if absent.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub(crate) out: PathBuf,

    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub(crate) seed: Option<u64>,

    /// Caps the worker thread count; results are identical for any value.
    #[arg(long, global = true)]
    pub(crate) threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-material attenuation statistics into the content-addressed cache.
    Stats,
    /// Run the (photon budget x bins x variant x correlation) sweep and write sweep.csv.
    Sweep(SweepArgs),
    /// Run Monte Carlo oracle checks on a small two-object fixture; exit 1 on any failure.
    Validate(ValidateArgs),
    /// Compute count-balanced detector bin edges for the reference attenuation.
    BinEdges(BinEdgesArgs),
    /// Compare correlated vs decorrelated noise ellipsoid volumes per object.
    VolumeRatio(VolumeRatioArgs),
}

#[derive(Args)]
pub struct SweepArgs {
    /// Restrict noise-model variants (comma separated); config list when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    pub(crate) variant: Vec<ModelVariant>,

    /// Restrict detector bin counts (comma separated); config list when omitted.
    #[arg(long, value_delimiter = ',')]
    pub(crate) bins: Vec<usize>,

    /// Restrict correlation modes (comma separated); config list when omitted.
    #[arg(long, value_delimiter = ',', value_parser = parse_corr_mode)]
    pub(crate) corr_mode: Vec<CorrelationMode>,

    /// Also write plot-ready facet data and gnuplot scripts under out/plots.
    #[arg(long)]
    pub(crate) emit_plots: bool,
}

#[derive(Args)]
pub struct ValidateArgs {
    /// Monte Carlo samples per oracle stream.
    #[arg(long, default_value_t = 200_000)]
    pub(crate) n_samples: usize,

    /// Corrupt the fixture's claimed covariance to exercise failure reporting.
    #[arg(long)]
    pub(crate) inject_covariance_fault: bool,
}

#[derive(Args)]
pub struct BinEdgesArgs {
    /// Bin counts to balance (comma separated); config list when omitted.
    #[arg(long, value_delimiter = ',')]
    pub(crate) bins: Vec<usize>,
}

#[derive(Args)]
pub struct VolumeRatioArgs {
    /// Noise model for the compared covariances.
    #[arg(long, value_parser = parse_variant, default_value = "combined")]
    pub(crate) variant: ModelVariant,

    /// Detector bin count.
    #[arg(long, default_value_t = 1)]
    pub(crate) bins: usize,
}

fn parse_variant(s: &str) -> Result<ModelVariant, String> {
    s.parse().map_err(|e: xtsi_core::Error| e.to_string())
}

fn parse_corr_mode(s: &str) -> Result<CorrelationMode, String> {
    s.parse().map_err(|e: xtsi_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> xtsi_core::Result<ExitCode> {
    if let Some(threads) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| xtsi_core::Error::Invalid(format!("worker pool: {e}")))?;
    }
    let man = manifest::RunManifest::load(&cli.global)?;
    match cli.command {
        Command::Stats => commands::cmd_stats(&man).map(|()| ExitCode::SUCCESS),
        Command::Sweep(args) => commands::cmd_sweep(&man, &args).map(|()| ExitCode::SUCCESS),
        Command::Validate(args) => commands::cmd_validate(&man, &args),
        Command::BinEdges(args) => commands::cmd_bin_edges(&man, &args).map(|()| ExitCode::SUCCESS),
        Command::VolumeRatio(args) => {
            commands::cmd_volume_ratio(&man, &args).map(|()| ExitCode::SUCCESS)
        }
    }
}
