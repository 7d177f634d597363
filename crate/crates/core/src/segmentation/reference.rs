//! Deterministic region-growing segmenter.
//!
//! Plant pixels are assumed darker than the paper. For each box, the
//! darkest pixels seed a flood fill that accepts connected pixels within
//! `tolerance` of the seed level. Positive points add their own floods,
//! negative points remove the intensity-similar region connected to them.
//! Pure black pixels are tiling padding and never part of the mask.

use serde::{Deserialize, Serialize};

use super::{MaskResolution, SegmentationResult, Segmenter, SegmenterCapabilities};
use crate::error::Result;
use crate::imagecore::components::flood_region;
use crate::imagecore::{BinaryMask, Connectivity, Raster, RasterImage};
use crate::prompting::{BoundingBox, PixelPoint, PromptSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    /// Maximum luminance distance from the seed level while growing.
    pub tolerance: u8,
    /// Fraction of darkest box pixels eligible as seeds.
    pub seed_percentile: f32,
    /// Minimum gap between the paper level and the seed level; below it a
    /// box holds no plant.
    pub min_contrast: u8,
    /// Percentile of patch luminance taken as the paper level.
    pub paper_percentile: f32,
    /// Luminance distance accepted when carving a negative point's region.
    pub carve_tolerance: u8,
    pub connectivity: Connectivity,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            tolerance: 32,
            seed_percentile: 0.10,
            min_contrast: 32,
            paper_percentile: 0.90,
            carve_tolerance: 16,
            connectivity: Connectivity::Eight,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ReferenceSegmenter {
    config: ReferenceConfig,
}

struct Luma {
    width: u32,
    height: u32,
    values: Vec<u8>,
    padding: Vec<bool>,
}

impl Luma {
    fn new(image: &RasterImage) -> Self {
        let (w, h) = image.dimensions();
        let mut values = Vec::with_capacity(w as usize * h as usize);
        let mut padding = Vec::with_capacity(values.capacity());
        for y in 0..h {
            for x in 0..w {
                values.push(image.luminance(x, y));
                padding.push(image.pixel(x, y).iter().all(|&v| v == 0));
            }
        }
        Self {
            width: w,
            height: h,
            values,
            padding,
        }
    }

    fn at(&self, x: u32, y: u32) -> Option<u8> {
        let i = y as usize * self.width as usize + x as usize;
        (!self.padding[i]).then_some(self.values[i])
    }

    fn histogram(&self, bbox: &BoundingBox) -> ([u64; 256], u64) {
        let mut hist = [0u64; 256];
        let mut n = 0;
        for y in bbox.y_min..=bbox.y_max {
            for x in bbox.x_min..=bbox.x_max {
                if let Some(v) = self.at(x, y) {
                    hist[v as usize] += 1;
                    n += 1;
                }
            }
        }
        (hist, n)
    }

    fn full(&self) -> BoundingBox {
        BoundingBox::new(0, 0, self.width - 1, self.height - 1)
    }
}

/// Smallest value `v` with at least `q * n` samples `<= v`.
fn percentile(hist: &[u64; 256], n: u64, q: f32) -> u8 {
    let target = ((q as f64 * n as f64).ceil() as u64).clamp(1, n.max(1));
    let mut acc = 0;
    for (v, &c) in hist.iter().enumerate() {
        acc += c;
        if acc >= target {
            return v as u8;
        }
    }
    255
}

impl ReferenceSegmenter {
    pub fn new(config: ReferenceConfig) -> Self {
        Self { config }
    }

    pub fn config(&self) -> &ReferenceConfig {
        &self.config
    }

    fn grow(&self, luma: &Luma, starts: &[(u32, u32)], level: u8, bounds: &BoundingBox, tolerance: u8) -> BinaryMask {
        flood_region(luma.width, luma.height, starts, bounds, self.config.connectivity, |x, y| {
            luma.at(x, y).is_some_and(|v| v.abs_diff(level) <= tolerance)
        })
    }

    /// Auto-seeded region for one box; empty when the box lacks contrast.
    fn box_region(&self, luma: &Luma, bbox: &BoundingBox, paper_level: u8) -> BinaryMask {
        let empty = BinaryMask::new(luma.width, luma.height);
        let (hist, n) = luma.histogram(bbox);
        if n == 0 {
            return empty;
        }
        let darkest = hist.iter().position(|&c| c > 0).unwrap_or(0) as u8;
        let seed_level = percentile(&hist, n, self.config.seed_percentile).min(darkest.saturating_add(self.config.tolerance));
        if paper_level.saturating_sub(seed_level) < self.config.min_contrast {
            return empty;
        }
        let mut seeds = Vec::new();
        let mut sum = 0u64;
        for y in bbox.y_min..=bbox.y_max {
            for x in bbox.x_min..=bbox.x_max {
                if let Some(v) = luma.at(x, y) {
                    if v <= seed_level {
                        seeds.push((x, y));
                        sum += v as u64;
                    }
                }
            }
        }
        let level = (sum as f64 / seeds.len() as f64).round() as u8;
        self.grow(luma, &seeds, level, bbox, self.config.tolerance)
    }

    fn point_region(&self, luma: &Luma, point: &PixelPoint, bounds: &BoundingBox) -> BinaryMask {
        match luma.at(point.x, point.y) {
            Some(level) => self.grow(luma, &[(point.x, point.y)], level, bounds, self.config.tolerance),
            None => BinaryMask::new(luma.width, luma.height),
        }
    }
}

impl Segmenter for ReferenceSegmenter {
    fn name(&self) -> &str {
        "reference"
    }

    fn capabilities(&self) -> SegmenterCapabilities {
        SegmenterCapabilities {
            accepts_boxes: true,
            accepts_points: true,
            native_mask_resolution: MaskResolution::Full,
        }
    }

    fn segment(&self, patch: &RasterImage, prompts: &PromptSet) -> Result<SegmentationResult> {
        prompts.validate(patch.width(), patch.height())?;
        self.capabilities().check(prompts)?;
        let luma = Luma::new(patch);
        let (hist, n) = luma.histogram(&luma.full());
        let paper_level = if n == 0 {
            0
        } else {
            percentile(&hist, n, self.config.paper_percentile)
        };

        let mut mask = BinaryMask::new(patch.width(), patch.height());
        for bbox in &prompts.boxes {
            let region = self.box_region(&luma, bbox, paper_level);
            mask = mask.union(&region)?;
        }
        for point in &prompts.positive_points {
            // grow inside the first box holding the point, else the patch
            let bounds = prompts
                .boxes
                .iter()
                .find(|b| b.contains(point.x, point.y))
                .copied()
                .unwrap_or_else(|| luma.full());
            mask = mask.union(&self.point_region(&luma, point, &bounds))?;
        }
        for point in &prompts.negative_points {
            let Some(level) = luma.at(point.x, point.y) else {
                continue;
            };
            let carve = flood_region(
                luma.width,
                luma.height,
                &[(point.x, point.y)],
                &luma.full(),
                self.config.connectivity,
                |x, y| mask.get(x, y) && luma.at(x, y).is_some_and(|v| v.abs_diff(level) <= self.config.carve_tolerance),
            );
            mask = mask.difference(&carve)?;
        }
        let score = if mask.is_empty() { 0.0 } else { 1.0 };
        Ok(SegmentationResult { mask, score })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::prompting::Polarity;

    const PAPER: u8 = 215;

    fn sheet(w: u32, h: u32, shape: &BinaryMask, plant: u8) -> RasterImage {
        RasterImage::from_fn(w, h, 3, |x, y| {
            if shape.get(x, y) {
                [plant, plant + 10, plant.saturating_sub(5)]
            } else {
                let t = PAPER - ((x * 7 + y * 13) % 11) as u8;
                [t, t, t - 4]
            }
        })
    }

    fn ellipse(w: u32, h: u32, cx: f64, cy: f64, rx: f64, ry: f64) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| {
            let dx = (x as f64 - cx) / rx;
            let dy = (y as f64 - cy) / ry;
            dx * dx + dy * dy <= 1.0
        })
    }

    #[test]
    fn box_around_dark_shape_recovers_it() {
        let shape = ellipse(64, 64, 30.0, 28.0, 14.0, 9.0);
        let img = sheet(64, 64, &shape, 50);
        let bbox = shape.foreground_bbox().unwrap();
        let out = ReferenceSegmenter::default()
            .segment(&img, &PromptSet::from_boxes(vec![bbox]))
            .unwrap();
        assert_eq!(out.mask, shape);
        assert_eq!(out.score, 1.0);
    }

    #[test]
    fn uniform_patch_is_empty() {
        let img = RasterImage::filled(32, 32, 3, 180);
        let out = ReferenceSegmenter::default()
            .segment(&img, &PromptSet::from_boxes(vec![BoundingBox::new(4, 4, 20, 20)]))
            .unwrap();
        assert!(out.mask.is_empty());
        assert_eq!(out.score, 0.0);
    }

    #[test]
    fn background_only_box_is_empty() {
        let shape = ellipse(64, 64, 50.0, 50.0, 6.0, 6.0);
        let img = sheet(64, 64, &shape, 50);
        let out = ReferenceSegmenter::default()
            .segment(&img, &PromptSet::from_boxes(vec![BoundingBox::new(2, 2, 20, 20)]))
            .unwrap();
        assert!(out.mask.is_empty());
        assert_eq!(out.score, 0.0);
    }

    #[test]
    fn two_boxes_union() {
        let a = ellipse(96, 64, 20.0, 20.0, 10.0, 8.0);
        let b = ellipse(96, 64, 70.0, 40.0, 12.0, 10.0);
        let both = a.union(&b).unwrap();
        let img = sheet(96, 64, &both, 45);
        let seg = ReferenceSegmenter::default();
        let ba = a.foreground_bbox().unwrap();
        let bb = b.foreground_bbox().unwrap();
        let ma = seg.segment(&img, &PromptSet::from_boxes(vec![ba])).unwrap().mask;
        let mb = seg.segment(&img, &PromptSet::from_boxes(vec![bb])).unwrap().mask;
        let mab = seg.segment(&img, &PromptSet::from_boxes(vec![ba, bb])).unwrap().mask;
        assert_eq!(mab, ma.union(&mb).unwrap());
        assert_eq!(mab, both);
    }

    #[test]
    fn mask_stays_inside_boxes() {
        let shape = ellipse(64, 64, 32.0, 32.0, 20.0, 20.0);
        let img = sheet(64, 64, &shape, 50);
        let bbox = BoundingBox::new(20, 20, 40, 35);
        let out = ReferenceSegmenter::default()
            .segment(&img, &PromptSet::from_boxes(vec![bbox]))
            .unwrap();
        let mut inside = BinaryMask::new(64, 64);
        inside.fill_box(&bbox, true);
        assert!(!out.mask.is_empty());
        assert!(out.mask.is_subset_of(&inside));
    }

    /// A dark shape (luma ~30) with an attached lighter artifact blob
    /// (luma ~62) that region growing from the shape also captures.
    fn two_blob() -> (RasterImage, BinaryMask, BinaryMask) {
        let shape = ellipse(80, 60, 28.0, 30.0, 16.0, 12.0);
        let artifact = BinaryMask::from_fn(80, 60, |x, y| (42..=58).contains(&x) && (24..=36).contains(&y))
            .difference(&shape)
            .unwrap();
        let img = RasterImage::from_fn(80, 60, 3, |x, y| {
            if shape.get(x, y) {
                [30, 30, 30]
            } else if artifact.get(x, y) {
                [62, 62, 62]
            } else {
                [210, 210, 205]
            }
        });
        (img, shape, artifact)
    }

    #[test]
    fn positive_and_negative_points() {
        let (img, shape, artifact) = two_blob();
        let seg = ReferenceSegmenter::default();
        let mut prompts = PromptSet::default();
        prompts.push_point(PixelPoint::new(28, 30), Polarity::Positive);
        let grown = seg.segment(&img, &prompts).unwrap().mask;
        assert_eq!(grown, shape.union(&artifact).unwrap());

        prompts.push_point(PixelPoint::new(50, 30), Polarity::Negative);
        let carved = seg.segment(&img, &prompts).unwrap().mask;
        assert_eq!(carved, shape);
    }

    #[test]
    fn deterministic() {
        let (img, _, _) = two_blob();
        let prompts = PromptSet::from_boxes(vec![BoundingBox::new(5, 5, 70, 50)]);
        let seg = ReferenceSegmenter::default();
        assert_eq!(seg.segment(&img, &prompts).unwrap(), seg.segment(&img, &prompts).unwrap());
    }

    #[test]
    fn padding_never_segmented() {
        let mut img = RasterImage::filled(40, 40, 3, 200);
        for y in 0..40 {
            for x in 30..40 {
                img.set_pixel(x, y, &[0, 0, 0]);
            }
        }
        let out = ReferenceSegmenter::default()
            .segment(&img, &PromptSet::from_boxes(vec![BoundingBox::new(0, 0, 39, 39)]))
            .unwrap();
        assert!(out.mask.is_empty());
    }

    #[test]
    fn invalid_prompts_rejected() {
        let img = RasterImage::filled(10, 10, 1, 100);
        let seg = ReferenceSegmenter::default();
        assert!(matches!(seg.segment(&img, &PromptSet::default()), Err(Error::EmptyInput(_))));
        let p = PromptSet::from_boxes(vec![BoundingBox::new(0, 0, 10, 3)]);
        assert!(matches!(seg.segment(&img, &p), Err(Error::InvalidArgument(_))));
    }
}
