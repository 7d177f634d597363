use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use plantsam_core::evaluation::{evaluate_set, read_baseline, read_manifest, write_report, EvalPair};
use plantsam_core::imagecore::io::load_mask;
use plantsam_core::Score;

use super::{batch_items, write_output, Report};
use crate::Common;

#[derive(Debug, Clone, Args)]
#[command(
    after_help = "Manifest: CSV with header `image_id,taxon,pred_path,truth_path`.\nReport: CSV `taxon,n,mean_iou,mean_dice,delta_iou,delta_dice`, one row per taxon plus a final `ALL` row. Means have four decimals; deltas are signed percentage points such as `+1.59`, empty without a baseline.\nBaseline: a report in the same format."
)]
pub struct EvalArgs {
    /// CSV with columns `image_id,taxon,pred_path,truth_path`; relative
    /// paths resolve against the manifest's directory.
    #[arg(long, short)]
    pub manifest: PathBuf,
    /// Earlier report whose means the deltas are taken against.
    #[arg(long, env = "PLANTSAM_BASELINE")]
    pub baseline: Option<PathBuf>,
    /// Report CSV (stdout when omitted).
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Per-image `image_id,taxon,iou,dice` CSV.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: &EvalArgs) -> Result<Report> {
    let file = File::open(&args.manifest).with_context(|| format!("opening {}", args.manifest.display()))?;
    let base = args.manifest.parent().map(PathBuf::from).unwrap_or_default();
    let entries = read_manifest(file, &base).with_context(|| format!("reading {}", args.manifest.display()))?;
    if entries.is_empty() {
        bail!("{} lists no images", args.manifest.display());
    }
    let baseline = match &args.baseline {
        Some(p) => Some(read_baseline(File::open(p).with_context(|| format!("opening {}", p.display()))?)?),
        None => None,
    };

    let mut report = Report::new("eval");
    let loaded = batch_items(
        &entries,
        |e| e.image_id.clone(),
        &args.common,
        &mut report,
        |e| {
            Ok(EvalPair {
                image_id: e.image_id.clone(),
                taxon: e.taxon.clone(),
                predicted: load_mask(&e.pred_path)?,
                truth: load_mask(&e.truth_path)?,
            })
        },
    )?;
    let pairs: Vec<EvalPair> = loaded.into_iter().map(|(_, p)| p).collect();
    if pairs.is_empty() {
        return Ok(report);
    }
    let (records, summary) = evaluate_set::<Score>(&pairs, baseline.as_ref())?;

    let mut csv = Vec::new();
    write_report(&summary, &mut csv)?;
    if args.output.is_some() || !args.common.json {
        write_output(args.output.as_deref(), &csv)?;
    }
    if let Some(path) = &args.records {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(["image_id", "taxon", "iou", "dice"])?;
        for r in &records {
            w.write_record([
                r.image_id.clone(),
                r.taxon.clone(),
                format!("{:.6}", r.iou),
                format!("{:.6}", r.dice),
            ])?;
        }
        w.flush()?;
    }
    if !summary.ignored_baseline_taxa.is_empty() {
        eprintln!(
            "warning: baseline taxa without images: {}",
            summary.ignored_baseline_taxa.join(", ")
        );
    }
    for row in summary.taxa.iter().chain(std::iter::once(&summary.overall)) {
        report.items.push(json!({
            "taxon": row.taxon,
            "n": row.image_count,
            "mean_iou": row.mean_iou,
            "mean_dice": row.mean_dice,
            "delta_iou": row.delta_vs_baseline.as_ref().map(|d| d.iou),
            "delta_dice": row.delta_vs_baseline.as_ref().map(|d| d.dice),
        }));
    }
    report.set("ignored_baseline_taxa", &summary.ignored_baseline_taxa);
    Ok(report)
}
