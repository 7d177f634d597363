use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde_json::json;

use plantsam_core::analytics::{
    coverage as coverage_stats, crop_to_content, heatmap as heatmap_of, write_coverage, Alignment, CropOptions,
};
use plantsam_core::imagecore::io::{load_image, load_mask, save_image, save_mask};
use plantsam_core::{BinaryMask, Score};

use super::{batch, discover_images, ensure_dir, mask_for, stem, write_output, Report};
use crate::Common;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlignmentArg {
    Center,
    None,
}

impl From<AlignmentArg> for Alignment {
    fn from(a: AlignmentArg) -> Self {
        match a {
            AlignmentArg::Center => Alignment::Center,
            AlignmentArg::None => Alignment::None,
        }
    }
}

fn parse_canvas(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<u32>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("bad canvas size {s:?}"))
    };
    Ok((parse(w)?, parse(h)?))
}

#[derive(Debug, Clone, Args)]
#[command(
    after_help = "Masks: binary PNGs (any non-zero pixel is plant).\nOutputs: a color-mapped PNG and `<output>.f32`, the raw per-pixel frequencies as little-endian f32 in row-major order."
)]
pub struct HeatmapArgs {
    /// Directory of binary mask PNGs.
    #[arg(long, short)]
    pub masks: PathBuf,
    /// Rendered PNG; raw frequencies go to `<output>.f32`.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Canvas as WIDTHxHEIGHT (default: largest mask extent).
    #[arg(long, value_parser = parse_canvas)]
    pub canvas: Option<(u32, u32)>,
    #[arg(long, value_enum, default_value = "center", env = "PLANTSAM_ALIGNMENT")]
    pub alignment: AlignmentArg,
    #[command(flatten)]
    pub common: Common,
}

fn load_masks(dir: &Path, common: &Common, report: &mut Report) -> Result<Vec<BinaryMask>> {
    let paths = discover_images(dir)?;
    if paths.is_empty() {
        bail!("no masks in {}", dir.display());
    }
    Ok(batch(&paths, common, report, |p| Ok(load_mask(p)?))?
        .into_iter()
        .map(|(_, m)| m)
        .collect())
}

pub fn heatmap(args: &HeatmapArgs) -> Result<Report> {
    let mut report = Report::new("heatmap");
    let masks = load_masks(&args.masks, &args.common, &mut report)?;
    if masks.is_empty() {
        return Ok(report);
    }
    let map = heatmap_of::<f32>(&masks, args.canvas, args.alignment.into())?;
    if let Some(parent) = args.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    map.save(&args.output)?;
    let peak = map.values.iter().copied().fold(0.0f32, f32::max);
    report.line(format!(
        "{} masks -> {} ({}x{}, peak {peak:.3})",
        map.sample_count,
        args.output.display(),
        map.width,
        map.height
    ));
    report.set("output", args.output.display().to_string());
    report.set("width", map.width);
    report.set("height", map.height);
    report.set("samples", map.sample_count);
    Ok(report)
}

#[derive(Debug, Clone, Args)]
#[command(
    after_help = "Input layout: `<input>/<taxon>/*.png` masks.\nOutput: CSV `taxon,n,plant_pct,background_pct` sorted by descending plant coverage, percentages with two decimals."
)]
pub struct CoverageArgs {
    /// Directory with one subdirectory of masks per taxon.
    #[arg(long, short)]
    pub input: PathBuf,
    /// CSV output (stdout when omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn coverage(args: &CoverageArgs) -> Result<Report> {
    let mut taxa: Vec<PathBuf> = fs::read_dir(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    taxa.retain(|p| p.is_dir());
    taxa.sort();
    if taxa.is_empty() {
        bail!("no taxon directories in {}", args.input.display());
    }
    let mut report = Report::new("coverage");
    let mut groups = Vec::new();
    for dir in &taxa {
        let masks = load_masks(dir, &args.common, &mut report)?;
        if !masks.is_empty() {
            groups.push((stem(dir), masks));
        }
    }
    if groups.is_empty() {
        return Ok(report);
    }
    let stats = coverage_stats::<Score>(&groups)?;
    let mut csv = Vec::new();
    write_coverage(&stats, &mut csv)?;
    if args.output.is_some() || !args.common.json {
        write_output(args.output.as_deref(), &csv)?;
    }
    for s in &stats {
        report.items.push(json!(s));
    }
    Ok(report)
}

#[derive(Debug, Clone, Args)]
#[command(
    after_help = "Pairs `<images>/{stem}.{png,jpg}` with `<masks>/{stem}.png`.\nWrites `<output>/images/{stem}.png` and `<output>/masks/{stem}.png`, cropped to the mask's tight box plus margin."
)]
pub struct CropArgs {
    /// Image file or directory.
    #[arg(long)]
    pub images: PathBuf,
    /// Masks named `{stem}.png` after the images.
    #[arg(long)]
    pub masks: PathBuf,
    /// Receives `images/` and `masks/` with the cropped pairs.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value_t = 0, env = "PLANTSAM_MARGIN")]
    pub margin: u32,
    /// Keep the original pixels outside the mask instead of zeroing them.
    #[arg(long)]
    pub keep_background: bool,
    #[command(flatten)]
    pub common: Common,
}

pub fn crop(args: &CropArgs) -> Result<Report> {
    let inputs = discover_images(&args.images)?;
    if inputs.is_empty() {
        bail!("no images in {}", args.images.display());
    }
    let (image_dir, mask_dir) = (args.output.join("images"), args.output.join("masks"));
    ensure_dir(&image_dir)?;
    ensure_dir(&mask_dir)?;
    let options = CropOptions {
        margin: args.margin,
        zero_background: !args.keep_background,
    };
    let mut report = Report::new("crop");
    let results = batch(&inputs, &args.common, &mut report, |path| {
        let image = load_image(path)?;
        let mask = load_mask(&mask_for(&args.masks, path))?;
        let (img, m, bbox) = crop_to_content(&image, &mask, options)?;
        save_image(&img, &mask_for(&image_dir, path))?;
        save_mask(&m, &mask_for(&mask_dir, path))?;
        Ok(bbox)
    })?;
    for (path, b) in results {
        report.line(format!("{}\t{},{} {}x{}", stem(&path), b.x_min, b.y_min, b.width(), b.height()));
        report.items.push(json!({
            "input": path.display().to_string(),
            "box": [b.x_min, b.y_min, b.x_max, b.y_max],
        }));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canvas_parsing() {
        assert_eq!(parse_canvas("640x480"), Ok((640, 480)));
        assert!(parse_canvas("640").is_err());
        assert!(parse_canvas("0x5").is_err());
    }
}
