//! Experiment driver. Each subcommand reproduces one desk-scale experiment
//! family, writing CSV artifacts, a gnuplot script and a manifest into its
//! own subdirectory of the output directory.
//!
//! Exit codes: 0 on success, 2 on usage errors, 3 on data errors, 4 on
//! numerical failures (including partial grid failures, which are listed in
//! the manifest).

mod config;
mod experiments;
mod manifest;

use clap::{Parser, Subcommand};
use config::ExperimentConfig;
use ntklab::error::Error;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ntklab",
    about = "Tangent-kernel drift and PCA-equivalence experiments for contrastive models",
    version
)]
struct Cli {
    /// Flat key=value experiment configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (a per-experiment subdirectory is created inside).
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,

    /// Worker threads for the (width x seed) grid.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Base seed; every cell derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed_base: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frozen-kernel dynamics vs true gradient descent across widths.
    NtkVsGd,
    /// Kernel drift vs width and epoch for either similarity.
    NtkDrift,
    /// Closed-form 1-D blow-up vs fine-step simulation.
    #[command(name = "divergence-1d")]
    Divergence1d,
    /// Feature-matrix drift and the layer-vs-matrix speed race.
    CvDrift,
    /// Representations with live vs frozen feature matrix.
    FrozenVsTrainedCv,
    /// Duplicated-output collapse demonstration.
    CollapseDemo,
    /// Downstream probe accuracy of PCA, trained and iterative models.
    Downstream,
    /// All bound calculators against measured quantities.
    BoundsReport,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::NtkVsGd => "ntk-vs-gd",
            Command::NtkDrift => "ntk-drift",
            Command::Divergence1d => "divergence-1d",
            Command::CvDrift => "cv-drift",
            Command::FrozenVsTrainedCv => "frozen-vs-trained-cv",
            Command::CollapseDemo => "collapse-demo",
            Command::Downstream => "downstream",
            Command::BoundsReport => "bounds-report",
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some grid cells failed; see the manifest");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e {
                Error::InvalidArgument(_) | Error::Unsupported(_) => 2,
                Error::Io(_) | Error::DataFormat(_) => 3,
                _ => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> ntklab::Result<bool> {
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            ExperimentConfig::parse(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    }
    let name = cli.command.name();
    let ctx = experiments::Context {
        config,
        out_dir: cli.out.join(name),
        seed_base: cli.seed_base,
    };
    experiments::dispatch(name, &ctx)
}
