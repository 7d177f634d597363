//! Promptable segmentation backends and the full-image pipeline.

mod model;
mod reference;

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use model::ModelSegmenter;
pub use reference::{ReferenceConfig, ReferenceSegmenter};

use crate::error::{Error, Result};
use crate::imagecore::{BinaryMask, Raster, RasterImage};
use crate::prompting::{prompt_for, Detector, DetectorConfig, PromptSet, RegionSource, Strategy};
use crate::tiling::{preprocess_and_split, stitch, Patch, PatchPlan, TilingConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskResolution {
    /// Masks come out at the patch's own size.
    Full,
    /// Fixed square resolution, upscaled to the patch size.
    Fixed(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmenterCapabilities {
    pub accepts_boxes: bool,
    pub accepts_points: bool,
    pub native_mask_resolution: MaskResolution,
}

impl SegmenterCapabilities {
    /// Rejects prompt kinds this backend cannot consume.
    pub fn check(&self, prompts: &PromptSet) -> Result<()> {
        if !self.accepts_boxes && !prompts.boxes.is_empty() {
            return Err(Error::UnsupportedPrompt("backend does not accept box prompts".into()));
        }
        if !self.accepts_points && prompts.has_points() {
            return Err(Error::UnsupportedPrompt("backend does not accept point prompts".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub mask: BinaryMask,
    pub score: f32,
}

/// A SAM-style promptable segmenter.
pub trait Segmenter: Send + Sync {
    fn name(&self) -> &str;

    fn capabilities(&self) -> SegmenterCapabilities;

    /// Patch-sized mask for the given prompts. Multiple boxes combine by
    /// union.
    fn segment(&self, patch: &RasterImage, prompts: &PromptSet) -> Result<SegmentationResult>;

    /// Whether concurrent `segment` calls are allowed.
    fn reentrant(&self) -> bool {
        true
    }
}

/// Nearest-neighbor resize of a binary mask.
pub fn upscale_nearest(mask: &BinaryMask, width: u32, height: u32) -> BinaryMask {
    if mask.dimensions() == (width, height) {
        return mask.clone();
    }
    let (sw, sh) = (mask.width() as u64, mask.height() as u64);
    BinaryMask::from_fn(width, height, |x, y| {
        let sx = (x as u64 * sw / width as u64) as u32;
        let sy = (y as u64 * sh / height as u64) as u32;
        mask.get(sx, sy)
    })
}

/// Keeps only the pixels covered by at least one box.
pub fn clip_to_boxes(mask: &BinaryMask, prompts: &PromptSet) -> BinaryMask {
    let mut keep = BinaryMask::new(mask.width(), mask.height());
    for b in &prompts.boxes {
        keep.fill_box(b, true);
    }
    mask.intersection(&keep).expect("same geometry")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub tiling: TilingConfig,
    pub strategy: Strategy,
    pub detector: DetectorConfig,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tiling: TilingConfig::default(),
            strategy: Strategy::MultiRegion,
            detector: DetectorConfig::default(),
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub mask: BinaryMask,
    pub plan: PatchPlan,
    /// Prompts used per patch in row-major order; `None` where the
    /// detector found nothing.
    pub prompts: Vec<Option<PromptSet>>,
    pub elapsed: Duration,
}

fn run_patch(
    patch: &Patch,
    detector: &dyn Detector,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
) -> Result<(BinaryMask, Option<PromptSet>)> {
    let size = patch.pixels.dimensions();
    let boxes = detector.detect(patch)?;
    let boxes: Vec<_> = boxes
        .into_iter()
        .filter(|b| b.confidence >= config.detector.confidence_threshold)
        .filter_map(|b| b.clamp_to(size.0, size.1))
        .collect();
    if boxes.is_empty() {
        return Ok((BinaryMask::new(size.0, size.1), None));
    }
    let prompts = prompt_for(config.strategy, RegionSource::Boxes(&boxes), &config.detector)?;
    let result = segmenter.segment(&patch.pixels, &prompts)?;
    result.mask.ensure_dimensions(size)?;
    Ok((result.mask, Some(prompts)))
}

/// Preprocess, tile, detect, prompt, segment and stitch one image.
pub fn segment_image(
    image: &RasterImage,
    detector: &dyn Detector,
    segmenter: &dyn Segmenter,
    config: &PipelineConfig,
) -> Result<PipelineOutput> {
    let start = Instant::now();
    config.detector.validate()?;
    let (plan, patches) = preprocess_and_split(image, &config.tiling)?;

    let work = |patch: &Patch| run_patch(patch, detector, segmenter, config).map_err(|e| e.at_patch(patch.grid_row, patch.grid_col));
    let results: Vec<Result<(BinaryMask, Option<PromptSet>)>> = if detector.reentrant() && segmenter.reentrant() {
        match config.workers {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?
                .install(|| patches.par_iter().map(work).collect()),
            None => patches.par_iter().map(work).collect(),
        }
    } else {
        // single dispatcher for non-reentrant backends
        let gate = Mutex::new(());
        patches
            .iter()
            .map(|p| {
                let _guard = gate.lock().unwrap_or_else(|e| e.into_inner());
                work(p)
            })
            .collect()
    };

    let mut masks = Vec::with_capacity(results.len());
    let mut prompts = Vec::with_capacity(results.len());
    for r in results {
        let (m, p) = r?;
        masks.push(m);
        prompts.push(p);
    }
    let mask = stitch(&masks, &plan)?;
    Ok(PipelineOutput {
        mask,
        plan,
        prompts,
        elapsed: start.elapsed(),
    })
}
