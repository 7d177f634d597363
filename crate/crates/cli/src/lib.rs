//! `plantsam` command-line interface.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "plantsam", version, about = "Herbarium sheet segmentation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML file supplying defaults for any flag of this subcommand.
    #[arg(long, env = "PLANTSAM_CONFIG")]
    pub config: Option<PathBuf>,
    /// Print a JSON run summary on stdout.
    #[arg(long, env = "PLANTSAM_JSON")]
    pub json: bool,
    /// Report failed inputs and continue with the rest.
    #[arg(long, env = "PLANTSAM_KEEP_GOING")]
    pub keep_going: bool,
    /// Worker threads (default: available cores).
    #[arg(long, env = "PLANTSAM_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment every image in a directory.
    Segment(commands::segment::SegmentArgs),
    /// Score predicted masks against ground truth per taxon.
    Eval(commands::eval::EvalArgs),
    /// Aggregate a directory of masks into a frequency heatmap.
    Heatmap(commands::analytics::HeatmapArgs),
    /// Plant coverage per taxon.
    Coverage(commands::analytics::CoverageArgs),
    /// Build a patch detection dataset from segmented images.
    MakeDataset(commands::dataset::MakeDatasetArgs),
    /// Crop images and masks to the plant.
    Crop(commands::analytics::CropArgs),
    /// Compare plant-to-box ratios of the two prompting strategies.
    RatioStudy(commands::ratio::RatioStudyArgs),
    /// Run the HTTP refinement service.
    Serve(commands::serve::ServeArgs),
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Segment(a) => &a.common,
            Command::Eval(a) => &a.common,
            Command::Heatmap(a) => &a.common,
            Command::Coverage(a) => &a.common,
            Command::MakeDataset(a) => &a.common,
            Command::Crop(a) => &a.common,
            Command::RatioStudy(a) => &a.common,
            Command::Serve(a) => &a.common,
        }
    }
}

/// Runs a parsed command; returns the process exit code.
pub fn run(cli: Cli) -> anyhow::Result<i32> {
    let common = cli.command.common().clone();
    if let Some(n) = common.workers {
        // ignore failure: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let report = match cli.command {
        Command::Segment(a) => commands::segment::run(&a)?,
        Command::Eval(a) => commands::eval::run(&a)?,
        Command::Heatmap(a) => commands::analytics::heatmap(&a)?,
        Command::Coverage(a) => commands::analytics::coverage(&a)?,
        Command::MakeDataset(a) => commands::dataset::run(&a)?,
        Command::Crop(a) => commands::analytics::crop(&a)?,
        Command::RatioStudy(a) => commands::ratio::run(&a)?,
        Command::Serve(a) => commands::serve::run(&a)?,
    };
    Ok(report.finish(&common))
}
