use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde_json::json;

use plantsam_core::imagecore::io::{load_image, load_mask, save_mask};
use plantsam_core::prompting::{Detector, DetectorConfig, HeuristicConfig, HeuristicDetector, MaskOracleDetector};
use plantsam_core::segmentation::ReferenceConfig;
use plantsam_core::{segment_image, PipelineConfig, Raster, ReferenceSegmenter, Segmenter, Strategy};

use super::{batch, discover_images, ensure_dir, mask_for, stem, RegionFlags, Report, TilingFlags};
use crate::Common;

/// `heuristic`, `oracle`, `model` or `model:<adapter.json>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorKind {
    /// Boxes around pixels that differ from the paper color.
    Heuristic,
    /// Boxes from ground-truth masks in `--truth-dir`.
    Oracle,
    /// ONNX detection model; without a path `--detector-config` is used.
    Model(Option<PathBuf>),
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "heuristic" => Ok(Self::Heuristic),
            "oracle" => Ok(Self::Oracle),
            _ => model_kind(s)
                .map(Self::Model)
                .ok_or_else(|| format!("expected heuristic, oracle or model:<path>, got {s:?}")),
        }
    }
}

/// `reference`, `model` or `model:<adapter.json>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmenterKind {
    /// Model-free region growing.
    Reference,
    /// ONNX promptable model; without a path `--segmenter-config` is used.
    Model(Option<PathBuf>),
}

impl FromStr for SegmenterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reference" => Ok(Self::Reference),
            _ => model_kind(s)
                .map(Self::Model)
                .ok_or_else(|| format!("expected reference or model:<path>, got {s:?}")),
        }
    }
}

fn model_kind(s: &str) -> Option<Option<PathBuf>> {
    match s.split_once(':') {
        None if s == "model" => Some(None),
        Some(("model", path)) if !path.is_empty() => Some(Some(PathBuf::from(path))),
        _ => None,
    }
}

/// Backend selection and tuning, shared with `serve`.
#[derive(Debug, Clone, Args)]
pub struct BackendFlags {
    /// JSON adapter config of an ONNX detection model.
    #[arg(long, env = "PLANTSAM_DETECTOR_CONFIG")]
    pub detector_config: Option<PathBuf>,
    /// JSON adapter config of an ONNX encoder/decoder pair.
    #[arg(long, env = "PLANTSAM_SEGMENTER_CONFIG")]
    pub segmenter_config: Option<PathBuf>,
    /// Heuristic detector: per-channel distance from the paper color.
    #[arg(long, default_value_t = 48, env = "PLANTSAM_DIFFERENCE_THRESHOLD")]
    pub difference_threshold: u8,
    /// Reference segmenter: luminance tolerance while growing.
    #[arg(long, default_value_t = 32, env = "PLANTSAM_TOLERANCE")]
    pub tolerance: u8,
}

impl BackendFlags {
    pub fn reference(&self) -> ReferenceSegmenter {
        ReferenceSegmenter::new(ReferenceConfig {
            tolerance: self.tolerance,
            ..ReferenceConfig::default()
        })
    }

    pub fn heuristic(&self, detector: &DetectorConfig) -> HeuristicDetector {
        HeuristicDetector::new(HeuristicConfig {
            difference_threshold: self.difference_threshold,
            detector: *detector,
        })
    }

    pub fn model_segmenter(&self, path: Option<&Path>) -> Result<Arc<dyn Segmenter>> {
        let Some(path) = path.or(self.segmenter_config.as_deref()) else {
            bail!("model segmenter needs model:<path> or --segmenter-config");
        };
        load_model_segmenter(path)
    }

    pub fn model_detector(&self, path: Option<&Path>, threshold: f32) -> Result<Arc<dyn Detector>> {
        let Some(path) = path.or(self.detector_config.as_deref()) else {
            bail!("model detector needs model:<path> or --detector-config");
        };
        load_model_detector(path, threshold)
    }
}

#[cfg(feature = "onnx")]
fn load_model_segmenter(path: &Path) -> Result<Arc<dyn Segmenter>> {
    use plantsam_core::segmentation::ModelSegmenter;
    Ok(Arc::new(
        ModelSegmenter::load(path).with_context(|| format!("loading {}", path.display()))?,
    ))
}

#[cfg(not(feature = "onnx"))]
fn load_model_segmenter(_: &Path) -> Result<Arc<dyn Segmenter>> {
    bail!("model backends need a build with the `onnx` feature")
}

#[cfg(feature = "onnx")]
fn load_model_detector(path: &Path, threshold: f32) -> Result<Arc<dyn Detector>> {
    use plantsam_core::prompting::ModelDetector;
    Ok(Arc::new(
        ModelDetector::load(path, threshold).with_context(|| format!("loading {}", path.display()))?,
    ))
}

#[cfg(not(feature = "onnx"))]
fn load_model_detector(_: &Path, _: f32) -> Result<Arc<dyn Detector>> {
    bail!("model backends need a build with the `onnx` feature")
}

#[derive(Debug, Clone, Args)]
#[command(
    after_help = "Inputs: PNG or JPEG images, processed in lexicographic order.\nOutputs: one binary mask PNG per image (`{stem}.png`, 255 = plant, 0 = background).\nWith --save-prompts, `{stem}.prompts.json` holds the boxes used per patch in row-major order (null where nothing was detected)."
)]
pub struct SegmentArgs {
    /// Image file or directory of images.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Directory for `{stem}.png` masks.
    #[arg(long, short)]
    pub output: PathBuf,
    #[arg(long, default_value = "multi_region", env = "PLANTSAM_STRATEGY")]
    pub strategy: Strategy,
    /// heuristic, oracle or model:<adapter.json>.
    #[arg(long, default_value = "heuristic", env = "PLANTSAM_DETECTOR")]
    pub detector: DetectorKind,
    /// reference or model:<adapter.json>.
    #[arg(long, default_value = "reference", env = "PLANTSAM_SEGMENTER")]
    pub segmenter: SegmenterKind,
    /// Ground-truth masks (`{stem}.png`) for the oracle detector.
    #[arg(long, env = "PLANTSAM_TRUTH_DIR")]
    pub truth_dir: Option<PathBuf>,
    /// Also write the prompts used per patch as `{stem}.prompts.json`.
    #[arg(long)]
    pub save_prompts: bool,
    #[command(flatten)]
    pub tiling: TilingFlags,
    #[command(flatten)]
    pub region: RegionFlags,
    #[command(flatten)]
    pub backends: BackendFlags,
    #[command(flatten)]
    pub common: Common,
}

pub fn run(args: &SegmentArgs) -> Result<Report> {
    let config = PipelineConfig {
        tiling: args.tiling.config()?,
        strategy: args.strategy,
        detector: args.region.config()?,
        workers: None,
    };
    if args.detector == DetectorKind::Oracle && args.truth_dir.is_none() {
        bail!("--detector oracle needs --truth-dir");
    }
    let segmenter: Arc<dyn Segmenter> = match &args.segmenter {
        SegmenterKind::Reference => Arc::new(args.backends.reference()),
        SegmenterKind::Model(path) => args.backends.model_segmenter(path.as_deref())?,
    };
    let shared_detector: Option<Arc<dyn Detector>> = match &args.detector {
        DetectorKind::Heuristic => Some(Arc::new(args.backends.heuristic(&config.detector))),
        DetectorKind::Model(path) => Some(
            args.backends
                .model_detector(path.as_deref(), config.detector.confidence_threshold)?,
        ),
        DetectorKind::Oracle => None,
    };

    let inputs = discover_images(&args.input)?;
    if inputs.is_empty() {
        bail!("no images in {}", args.input.display());
    }
    ensure_dir(&args.output)?;
    let mut report = Report::new("segment");

    let results = batch(&inputs, &args.common, &mut report, |path: &Path| {
        let image = load_image(path)?;
        let detector = match &shared_detector {
            Some(d) => d.clone(),
            None => {
                let truth_dir = args.truth_dir.as_deref().expect("checked above");
                let truth = load_mask(&mask_for(truth_dir, path))?;
                Arc::new(MaskOracleDetector::new(truth, config.detector)) as Arc<dyn Detector>
            }
        };
        let out = segment_image(&image, detector.as_ref(), segmenter.as_ref(), &config)?;
        let mask_path = mask_for(&args.output, path);
        save_mask(&out.mask, &mask_path)?;
        if args.save_prompts {
            let prompts_path = args.output.join(format!("{}.prompts.json", stem(path)));
            std::fs::write(&prompts_path, serde_json::to_vec_pretty(&out.prompts)?)
                .with_context(|| format!("writing {}", prompts_path.display()))?;
        }
        Ok((out, mask_path))
    })?;

    for (path, (out, mask_path)) in results {
        let (w, h) = out.mask.dimensions();
        let pct = 100.0 * out.mask.count() as f64 / (w as f64 * h as f64);
        let boxes: usize = out.prompts.iter().flatten().map(|p| p.boxes.len()).sum();
        let ms = out.elapsed.as_secs_f64() * 1000.0;
        report.line(format!(
            "{}\t{w}x{h}\tpatch {}\t{} patches\t{boxes} boxes\t{pct:.2}% plant\t{ms:.0} ms",
            stem(&path),
            out.plan.patch_size,
            out.plan.patch_count()
        ));
        report.items.push(json!({
            "input": path.display().to_string(),
            "mask": mask_path.display().to_string(),
            "width": w,
            "height": h,
            "patch_size": out.plan.patch_size,
            "patches": out.plan.patch_count(),
            "boxes": boxes,
            "plant_pct": pct,
            "elapsed_ms": ms,
        }));
    }
    Ok(report)
}
