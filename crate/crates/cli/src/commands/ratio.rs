use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use plantsam_core::prompting::ratio_summary;
use plantsam_core::{Raster, Score, Strategy};

use super::{batch, discover_images, stem, RegionFlags, Report, TilingFlags};
use crate::Common;

#[derive(Debug, Clone, Args)]
#[command(
    after_help = "Masks: binary PNGs. Each mask is patched like an image of the same size; both strategies derive their boxes per patch from the mask.\nPrinted: mean of per-image plant-to-box ratios and the pooled mean over all boxes, in percent with two decimals.\nCSV output: `image_id,single_box,multi_region`."
)]
pub struct RatioStudyArgs {
    /// Ground-truth or predicted mask PNGs.
    #[arg(long, short)]
    pub masks: PathBuf,
    /// Per-image `image_id,single_box,multi_region` CSV.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub tiling: TilingFlags,
    #[command(flatten)]
    pub region: RegionFlags,
    #[command(flatten)]
    pub common: Common,
}

fn pct(v: Option<Score>) -> String {
    v.map(|v| format!("{:.2}", v * 100.0)).unwrap_or_else(|| "n/a".into())
}

pub fn run(args: &RatioStudyArgs) -> Result<Report> {
    let tiling = args.tiling.config()?;
    let detector = args.region.config()?;
    let paths = discover_images(&args.masks)?;
    if paths.is_empty() {
        bail!("no masks in {}", args.masks.display());
    }
    let mut report = Report::new("ratio-study");
    let loaded = batch(&paths, &args.common, &mut report, |p| {
        Ok(plantsam_core::imagecore::io::load_mask(p)?)
    })?;
    if loaded.is_empty() {
        return Ok(report);
    }
    let (ids, masks): (Vec<String>, Vec<_>) = loaded.into_iter().map(|(p, m)| (stem(&p), m)).unzip();
    let plan_for = |m: &plantsam_core::BinaryMask| tiling.plan_for(m.width(), m.height());
    let single = ratio_summary::<Score>(&masks, Strategy::SingleBox, &detector, plan_for)?;
    let multi = ratio_summary::<Score>(&masks, Strategy::MultiRegion, &detector, plan_for)?;

    report.line(format!("{:<14}{:>10}{:>10}{:>8}", "strategy", "mean %", "pooled %", "boxes"));
    for (name, s) in [("single_box", &single), ("multi_region", &multi)] {
        report.line(format!(
            "{name:<14}{:>10}{:>10}{:>8}",
            pct(s.per_image_mean),
            pct(s.pooled_mean),
            s.box_count
        ));
        report.set(
            name,
            json!({
                "mean_pct": s.per_image_mean.map(|v| v * 100.0),
                "pooled_pct": s.pooled_mean.map(|v| v * 100.0),
                "boxes": s.box_count,
            }),
        );
    }

    if let Some(path) = &args.output {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["image_id", "single_box", "multi_region"])?;
        for (i, id) in ids.iter().enumerate() {
            w.write_record([id.clone(), pct(single.per_image[i]), pct(multi.per_image[i])])?;
        }
        w.flush()?;
    }
    for (i, id) in ids.iter().enumerate() {
        report.items.push(json!({
            "image_id": id,
            "single_box": single.per_image[i],
            "multi_region": multi.per_image[i],
        }));
    }
    Ok(report)
}
