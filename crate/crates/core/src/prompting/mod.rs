//! Box and point prompts, the two box strategies, and the plant-to-box
//! area diagnostic.

mod detectors;
mod model;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use detectors::{Detector, HeuristicConfig, HeuristicDetector, MaskOracleDetector};
pub use model::ModelDetector;

use crate::error::{Error, Result};
use crate::imagecore::{connected_components, BinaryMask, Connectivity, Raster};
use crate::scalar::{mean, Scalar};
use crate::tiling::{split, PatchPlan};

/// Axis-aligned box with inclusive pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
    #[serde(default = "one")]
    pub confidence: f32,
}

fn one() -> f32 {
    1.0
}

impl Eq for BoundingBox {}

impl BoundingBox {
    /// Mask-derived box (confidence 1). Coordinates are swapped into order
    /// if given reversed.
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self {
            x_min: x0.min(x1),
            y_min: y0.min(y1),
            x_max: x0.max(x1),
            y_max: y0.max(y1),
            confidence: 1.0,
        }
    }

    pub fn with_confidence(mut self, confidence: f32) -> Self {
        self.confidence = confidence;
        self
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        self.x_min <= other.x_min && self.y_min <= other.y_min && self.x_max >= other.x_max && self.y_max >= other.y_max
    }

    /// Smallest box containing both; keeps the larger confidence.
    pub fn hull(&self, other: &BoundingBox) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
            confidence: self.confidence.max(other.confidence),
        }
    }

    pub fn intersect(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x_min = self.x_min.max(other.x_min);
        let y_min = self.y_min.max(other.y_min);
        let x_max = self.x_max.min(other.x_max);
        let y_max = self.y_max.min(other.y_max);
        (x_min <= x_max && y_min <= y_max).then_some(BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
            confidence: self.confidence,
        })
    }

    /// Part of the box inside a `width`x`height` grid.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        if width == 0 || height == 0 {
            return None;
        }
        self.intersect(&BoundingBox::new(0, 0, width - 1, height - 1))
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.x_max < width && self.y_max < height
    }

    pub fn translate(&self, dx: u32, dy: u32) -> BoundingBox {
        BoundingBox {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
            confidence: self.confidence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelPoint {
    pub x: u32,
    pub y: u32,
}

impl PixelPoint {
    pub fn new(x: u32, y: u32) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

impl FromStr for Polarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "positive" => Ok(Polarity::Positive),
            "negative" => Ok(Polarity::Negative),
            other => Err(Error::InvalidArgument(format!("unknown polarity {other:?}"))),
        }
    }
}

/// Prompts conditioning one segmentation call.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    #[serde(default)]
    pub boxes: Vec<BoundingBox>,
    #[serde(default)]
    pub positive_points: Vec<PixelPoint>,
    #[serde(default)]
    pub negative_points: Vec<PixelPoint>,
}

impl PromptSet {
    pub fn from_boxes(boxes: Vec<BoundingBox>) -> Self {
        Self { boxes, ..Self::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty() && self.positive_points.is_empty() && self.negative_points.is_empty()
    }

    pub fn has_points(&self) -> bool {
        !self.positive_points.is_empty() || !self.negative_points.is_empty()
    }

    pub fn push_point(&mut self, point: PixelPoint, polarity: Polarity) {
        match polarity {
            Polarity::Positive => self.positive_points.push(point),
            Polarity::Negative => self.negative_points.push(point),
        }
    }

    /// Checks the non-emptiness and bounds invariants for a host of the
    /// given size.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyInput("prompt set has neither boxes nor points"));
        }
        if let Some(b) = self.boxes.iter().find(|b| !b.fits_in(width, height)) {
            return Err(Error::InvalidArgument(format!("box {b:?} outside {width}x{height} host")));
        }
        let points = self.positive_points.iter().chain(&self.negative_points);
        if let Some(p) = points.into_iter().find(|p| p.x >= width || p.y >= height) {
            return Err(Error::InvalidArgument(format!(
                "point ({}, {}) outside {width}x{height} host",
                p.x, p.y
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub confidence_threshold: f32,
    pub min_component_pixels: u64,
    pub connectivity: Connectivity,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.25,
            min_component_pixels: 16,
            connectivity: Connectivity::Eight,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence_threshold) {
            return Err(Error::InvalidArgument(format!(
                "confidence threshold {} outside [0, 1]",
                self.confidence_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SingleBox,
    #[default]
    MultiRegion,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::SingleBox => "single_box",
            Strategy::MultiRegion => "multi_region",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single_box" | "single-box" => Ok(Strategy::SingleBox),
            "multi_region" | "multi-region" => Ok(Strategy::MultiRegion),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Where prompt boxes come from: a mask (boxes derived from its
/// components) or a detector's boxes.
#[derive(Debug, Clone, Copy)]
pub enum RegionSource<'a> {
    Mask(&'a BinaryMask),
    Boxes(&'a [BoundingBox]),
}

/// One box enclosing every plant pixel (or every detector box).
pub fn single_box_prompt(source: RegionSource<'_>) -> Result<PromptSet> {
    let hull = match source {
        RegionSource::Mask(mask) => mask.foreground_bbox(),
        RegionSource::Boxes(boxes) => boxes.iter().copied().reduce(|a, b| a.hull(&b)),
    };
    let hull = hull.ok_or(Error::EmptyInput("single-box prompt needs foreground or boxes"))?;
    Ok(PromptSet::from_boxes(vec![hull]))
}

/// One box per retained connected component (or per detector box).
pub fn multi_region_prompt(source: RegionSource<'_>, config: &DetectorConfig) -> Result<PromptSet> {
    let boxes: Vec<BoundingBox> = match source {
        RegionSource::Mask(mask) => connected_components(mask, config.connectivity)
            .into_iter()
            .filter(|c| c.pixel_count >= config.min_component_pixels)
            .map(|c| c.bbox)
            .collect(),
        RegionSource::Boxes(boxes) => boxes.to_vec(),
    };
    if boxes.is_empty() {
        return Err(Error::EmptyInput("multi-region prompt needs at least one region"));
    }
    Ok(PromptSet::from_boxes(boxes))
}

pub fn prompt_for(strategy: Strategy, source: RegionSource<'_>, config: &DetectorConfig) -> Result<PromptSet> {
    match strategy {
        Strategy::SingleBox => single_box_prompt(source),
        Strategy::MultiRegion => multi_region_prompt(source, config),
    }
}

/// Mean over boxes of (foreground pixels in box) / (box area).
pub fn plant_to_box_ratio<T: Scalar>(mask: &BinaryMask, boxes: &[BoundingBox]) -> Result<T> {
    if boxes.is_empty() {
        return Err(Error::EmptyInput("plant-to-box ratio needs at least one box"));
    }
    let mut ratios = Vec::with_capacity(boxes.len());
    for b in boxes {
        if !b.fits_in(mask.width(), mask.height()) {
            return Err(Error::InvalidArgument(format!(
                "box {b:?} outside {}x{} mask",
                mask.width(),
                mask.height()
            )));
        }
        ratios.push(T::from_ratio(mask.count_in_box(b), b.area()));
    }
    Ok(mean(ratios).expect("non-empty"))
}

/// Strategy boxes for every patch of a mask, in full-image coordinates.
///
/// Boxes are derived per patch exactly as the pipeline would derive them
/// from a mask-oracle detector.
pub fn strategy_boxes(mask: &BinaryMask, plan: &PatchPlan, strategy: Strategy, config: &DetectorConfig) -> Result<Vec<BoundingBox>> {
    let mut out = Vec::new();
    for patch in split(mask, plan)? {
        if patch.pixels.is_empty() {
            continue;
        }
        let prompts = match prompt_for(strategy, RegionSource::Mask(&patch.pixels), config) {
            Ok(p) => p,
            Err(Error::EmptyInput(_)) => continue,
            Err(e) => return Err(e),
        };
        let (ox, oy) = plan.origin(patch.grid_row, patch.grid_col);
        out.extend(prompts.boxes.iter().map(|b| b.translate(ox, oy)));
    }
    Ok(out)
}

/// Ratio-study result for one strategy over a set of masks.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioSummary<T> {
    /// Per-image mean ratio; `None` for images without boxes.
    pub per_image: Vec<Option<T>>,
    /// Mean of the per-image means.
    pub per_image_mean: Option<T>,
    /// Mean over every box of every image.
    pub pooled_mean: Option<T>,
    pub box_count: usize,
}

pub fn ratio_summary<T: Scalar>(
    masks: &[BinaryMask],
    strategy: Strategy,
    config: &DetectorConfig,
    plan_for: impl Fn(&BinaryMask) -> Result<PatchPlan>,
) -> Result<RatioSummary<T>> {
    let mut per_image = Vec::with_capacity(masks.len());
    let mut pooled = Vec::new();
    for mask in masks {
        let plan = plan_for(mask)?;
        let boxes = strategy_boxes(mask, &plan, strategy, config)?;
        if boxes.is_empty() {
            per_image.push(None);
            continue;
        }
        for b in &boxes {
            pooled.push(T::from_ratio(mask.count_in_box(b), b.area()));
        }
        per_image.push(Some(plant_to_box_ratio(mask, &boxes)?));
    }
    Ok(RatioSummary {
        per_image_mean: mean(per_image.iter().flatten().copied()),
        pooled_mean: mean(pooled.iter().copied()),
        box_count: pooled.len(),
        per_image,
    })
}
