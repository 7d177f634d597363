use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use plantsam_core::dataset::{build_detection_dataset, split, write_dataset, DatasetConfig};
use plantsam_core::imagecore::io::load_image;

use super::{batch, discover_images, stem, ConnectivityArg, Report, TilingFlags};
use crate::Common;

#[derive(Debug, Clone, Args)]
#[command(
    after_help = "Inputs: segmented PNG or JPEG images, plant pixels on black.\nLayout under <output>: `images/{split}/{patch_id}.png`, `labels/{split}/{patch_id}.txt` and `splits.json`.\nLabels: one `0 cx cy w h` line per box, normalized to the patch size with six decimals.\nPatch ids are `{stem}_r{row}_c{col}`."
)]
pub struct MakeDatasetArgs {
    /// Segmented images (plant pixels kept, background black).
    #[arg(long, short)]
    pub input: PathBuf,
    /// Dataset root; receives `images/`, `labels/` and `splits.json`.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0, env = "PLANTSAM_SEED")]
    pub seed: u64,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', default_value = "0.75,0.20,0.05", env = "PLANTSAM_RATIOS")]
    pub ratios: Vec<f64>,
    /// Brightest-channel value above which a pixel counts as plant.
    #[arg(long, default_value_t = 0, env = "PLANTSAM_NONBLACK_THRESHOLD")]
    pub nonblack_threshold: u8,
    #[arg(long, default_value_t = 16, env = "PLANTSAM_MIN_COMPONENT_PIXELS")]
    pub min_component_pixels: u64,
    #[arg(long, value_enum, default_value = "8", env = "PLANTSAM_CONNECTIVITY")]
    pub connectivity: ConnectivityArg,
    /// Leave out patches without any box.
    #[arg(long)]
    pub drop_negatives: bool,
    #[command(flatten)]
    pub tiling: TilingFlags,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: &MakeDatasetArgs) -> Result<Report> {
    let [train, val, test] = args.ratios[..] else {
        bail!("--ratios needs three values, got {}", args.ratios.len());
    };
    let config = DatasetConfig {
        tiling: args.tiling.config()?,
        nonblack_threshold: args.nonblack_threshold,
        min_component_pixels: args.min_component_pixels,
        connectivity: args.connectivity.into(),
        keep_negatives: !args.drop_negatives,
    };
    let inputs = discover_images(&args.input)?;
    if inputs.is_empty() {
        bail!("no images in {}", args.input.display());
    }
    let mut report = Report::new("make-dataset");
    let images: Vec<_> = batch(&inputs, &args.common, &mut report, |p| Ok(load_image(p)?))?
        .into_iter()
        .map(|(p, img)| (stem(&p), img))
        .collect();
    if images.is_empty() {
        return Ok(report);
    }
    let dataset = build_detection_dataset(&images, &config)?;
    let manifest = split(&dataset.patch_ids(), (train, val, test), args.seed)?;
    write_dataset(&args.output, &dataset, &manifest)?;

    let boxes: usize = dataset.annotations.iter().map(|a| a.boxes.len()).sum();
    let negatives = dataset.annotations.iter().filter(|a| a.boxes.is_empty()).count();
    report.line(format!(
        "{} images -> {} patches ({negatives} without boxes), {boxes} boxes",
        images.len(),
        dataset.patches.len()
    ));
    report.line(format!(
        "train {}  val {}  test {}  (seed {})",
        manifest.train.len(),
        manifest.val.len(),
        manifest.test.len(),
        args.seed
    ));
    report.set("patches", dataset.patches.len());
    report.set("boxes", boxes);
    report.set("negatives", negatives);
    report.set("train", manifest.train.len());
    report.set("val", manifest.val.len());
    report.set("test", manifest.test.len());
    report.set("seed", args.seed);
    Ok(report)
}
