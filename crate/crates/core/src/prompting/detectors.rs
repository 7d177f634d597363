use serde::{Deserialize, Serialize};

use super::{BoundingBox, DetectorConfig};
use crate::error::{Error, Result};
use crate::imagecore::{connected_components, BinaryMask, Raster, RasterImage};
use crate::tiling::Patch;

/// Produces plant-region boxes for one patch, in patch coordinates.
pub trait Detector: Send + Sync {
    fn name(&self) -> &str;

    fn detect(&self, patch: &Patch) -> Result<Vec<BoundingBox>>;

    /// Whether concurrent `detect` calls are allowed.
    fn reentrant(&self) -> bool {
        true
    }
}

fn component_boxes(mask: &BinaryMask, config: &DetectorConfig) -> Vec<BoundingBox> {
    connected_components(mask, config.connectivity)
        .into_iter()
        .filter(|c| c.pixel_count >= config.min_component_pixels)
        .map(|c| c.bbox)
        .collect()
}

/// Boxes from the connected components of a known full-image mask.
#[derive(Debug, Clone)]
pub struct MaskOracleDetector {
    mask: BinaryMask,
    config: DetectorConfig,
}

impl MaskOracleDetector {
    pub fn new(mask: BinaryMask, config: DetectorConfig) -> Self {
        Self { mask, config }
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }
}

impl Detector for MaskOracleDetector {
    fn name(&self) -> &str {
        "oracle"
    }

    fn detect(&self, patch: &Patch) -> Result<Vec<BoundingBox>> {
        let size = patch.pixels.width();
        let (x, y) = (patch.grid_col * size, patch.grid_row * size);
        if x >= self.mask.width() || y >= self.mask.height() {
            return Err(Error::MissingMask(format!(
                "patch r{} c{} lies outside the {}x{} oracle mask",
                patch.grid_row,
                patch.grid_col,
                self.mask.width(),
                self.mask.height()
            )));
        }
        let local = self.mask.window(x, y, size, patch.pixels.height());
        Ok(component_boxes(&local, &self.config))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicConfig {
    /// Minimum per-channel distance from the background estimate for a
    /// pixel to count as plant.
    pub difference_threshold: u8,
    pub detector: DetectorConfig,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            difference_threshold: 48,
            detector: DetectorConfig::default(),
        }
    }
}

/// Model-free detector: estimates the paper color as the per-channel
/// median of the patch and boxes the components that differ from it.
///
/// Pure black pixels are treated as tiling padding and never as plant.
#[derive(Debug, Clone, Default)]
pub struct HeuristicDetector {
    config: HeuristicConfig,
}

impl HeuristicDetector {
    pub fn new(config: HeuristicConfig) -> Self {
        Self { config }
    }

    /// Foreground estimate used for boxing.
    pub fn difference_mask(&self, image: &RasterImage) -> BinaryMask {
        let c = image.channels() as usize;
        let data = image.data();
        let is_padding = |px: &[u8]| px.iter().all(|&v| v == 0);

        let mut background = [0u8; 3];
        for (ch, bg) in background.iter_mut().enumerate().take(c) {
            let mut hist = [0u64; 256];
            let mut n = 0u64;
            for px in data.chunks_exact(c).filter(|px| !is_padding(px)) {
                hist[px[ch] as usize] += 1;
                n += 1;
            }
            if n == 0 {
                return BinaryMask::new(image.width(), image.height());
            }
            let mut acc = 0u64;
            for (v, &count) in hist.iter().enumerate() {
                acc += count;
                if 2 * acc >= n {
                    *bg = v as u8;
                    break;
                }
            }
        }

        let bits = data
            .chunks_exact(c)
            .map(|px| {
                !is_padding(px)
                    && px.iter().zip(&background).map(|(&v, &b)| v.abs_diff(b)).max().unwrap_or(0) > self.config.difference_threshold
            })
            .collect();
        BinaryMask::from_bits(image.width(), image.height(), bits).expect("geometry")
    }
}

impl Detector for HeuristicDetector {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn detect(&self, patch: &Patch) -> Result<Vec<BoundingBox>> {
        let mask = self.difference_mask(&patch.pixels);
        Ok(component_boxes(&mask, &self.config.detector))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::{make_plan, split};

    fn patch(pixels: RasterImage) -> Patch {
        Patch {
            grid_row: 0,
            grid_col: 0,
            pixels,
        }
    }

    #[test]
    fn oracle_two_squares() {
        let mask = BinaryMask::from_fn(16, 16, |x, y| {
            ((2..=4).contains(&x) && (2..=4).contains(&y)) || ((10..=12).contains(&x) && (10..=12).contains(&y))
        });
        let det = MaskOracleDetector::new(
            mask,
            DetectorConfig {
                min_component_pixels: 1,
                ..DetectorConfig::default()
            },
        );
        let boxes = det.detect(&patch(RasterImage::filled(16, 16, 3, 200))).unwrap();
        assert_eq!(boxes, vec![BoundingBox::new(2, 2, 4, 4), BoundingBox::new(10, 10, 12, 12)]);
    }

    #[test]
    fn oracle_uses_patch_offset() {
        let mask = BinaryMask::from_fn(600, 300, |x, y| (300..=310).contains(&x) && (10..=20).contains(&y));
        let img = RasterImage::filled(600, 300, 3, 200);
        let plan = make_plan(600, 300, 256).unwrap();
        let det = MaskOracleDetector::new(mask, DetectorConfig::default());
        let patches = split(&img, &plan).unwrap();
        assert!(det.detect(&patches[0]).unwrap().is_empty());
        assert_eq!(det.detect(&patches[1]).unwrap(), vec![BoundingBox::new(44, 10, 54, 20)]);
    }

    #[test]
    fn oracle_reports_missing_mask() {
        let det = MaskOracleDetector::new(BinaryMask::new(100, 100), DetectorConfig::default());
        let p = Patch {
            grid_row: 0,
            grid_col: 1,
            pixels: RasterImage::filled(256, 256, 3, 0),
        };
        assert!(matches!(det.detect(&p), Err(Error::MissingMask(_))));
    }

    #[test]
    fn background_patch_yields_nothing() {
        let blank = patch(RasterImage::filled(64, 64, 3, 220));
        assert!(HeuristicDetector::default().detect(&blank).unwrap().is_empty());
        let oracle = MaskOracleDetector::new(BinaryMask::new(64, 64), DetectorConfig::default());
        assert!(oracle.detect(&blank).unwrap().is_empty());
    }

    #[test]
    fn heuristic_finds_dark_blob_and_ignores_padding() {
        let mut img = RasterImage::filled(64, 64, 3, 220);
        for y in 10..20 {
            for x in 30..40 {
                img.set_pixel(x, y, &[40, 60, 30]);
            }
        }
        // black padding strip on the right
        for y in 0..64 {
            for x in 56..64 {
                img.set_pixel(x, y, &[0, 0, 0]);
            }
        }
        let boxes = HeuristicDetector::default().detect(&patch(img)).unwrap();
        assert_eq!(boxes, vec![BoundingBox::new(30, 10, 39, 19)]);
    }
}
