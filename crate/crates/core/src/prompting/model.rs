use std::sync::Arc;

use super::{BoundingBox, Detector};
use crate::adapter::{prepare_input, rescale_detection, DetectionEngine, DetectorAdapterConfig, Normalization};
use crate::error::Result;
use crate::imagecore::Raster;
use crate::tiling::Patch;

/// Detector backed by an exported detection model.
///
/// The patch is resized to the model's square input, normalized, and the
/// returned boxes are mapped back, thresholded, clamped to the patch and
/// stripped of degenerate boxes.
pub struct ModelDetector {
    engine: Arc<dyn DetectionEngine>,
    input_size: u32,
    normalization: Normalization,
    confidence_threshold: f32,
}

impl ModelDetector {
    pub fn new(engine: Arc<dyn DetectionEngine>, input_size: u32, normalization: Normalization, confidence_threshold: f32) -> Self {
        Self {
            engine,
            input_size,
            normalization,
            confidence_threshold,
        }
    }

    pub fn from_config(engine: Arc<dyn DetectionEngine>, config: &DetectorAdapterConfig, default_threshold: f32) -> Self {
        Self::new(
            engine,
            config.input_size,
            config.normalization.clone(),
            config.confidence_threshold.unwrap_or(default_threshold),
        )
    }

    /// Loads the tract-backed engine named by an adapter config file.
    #[cfg(feature = "onnx")]
    pub fn load(config_path: &std::path::Path, default_threshold: f32) -> Result<Self> {
        let (config, base): (DetectorAdapterConfig, _) = crate::adapter::read_adapter_config(config_path)?;
        let engine = crate::adapter::onnx::OnnxDetectionEngine::load(&base.join(&config.model), config.input_size)?;
        Ok(Self::from_config(Arc::new(engine), &config, default_threshold))
    }
}

impl Detector for ModelDetector {
    fn name(&self) -> &str {
        "model"
    }

    fn detect(&self, patch: &Patch) -> Result<Vec<BoundingBox>> {
        let (w, h) = patch.pixels.dimensions();
        let input = prepare_input(&patch.pixels, self.input_size, &self.normalization);
        let raw = self.engine.infer(&input)?;
        Ok(raw
            .iter()
            .filter(|d| d.score >= self.confidence_threshold)
            .filter_map(|d| rescale_detection(d, self.input_size, w, h))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{ModelInput, RawDetection};
    use crate::error::Error;
    use crate::imagecore::RasterImage;

    struct Fixed(Vec<RawDetection>);

    impl DetectionEngine for Fixed {
        fn infer(&self, input: &ModelInput) -> Result<Vec<RawDetection>> {
            assert_eq!(input.data.len(), 3 * 128 * 128);
            Ok(self.0.clone())
        }
    }

    struct Broken;

    impl DetectionEngine for Broken {
        fn infer(&self, _: &ModelInput) -> Result<Vec<RawDetection>> {
            Err(Error::Model("inference failed".into()))
        }
    }

    fn det(x0: f32, y0: f32, x1: f32, y1: f32, score: f32) -> RawDetection {
        RawDetection {
            x_min: x0,
            y_min: y0,
            x_max: x1,
            y_max: y1,
            score,
        }
    }

    #[test]
    fn thresholds_rescales_and_clamps() {
        let engine = Fixed(vec![
            det(0.0, 0.0, 64.0, 64.0, 0.9),
            det(10.0, 10.0, 20.0, 20.0, 0.1),
            det(100.0, 120.0, 140.0, 200.0, 0.5),
            det(130.0, 0.0, 150.0, 10.0, 0.9),
        ]);
        let d = ModelDetector::new(Arc::new(engine), 128, Normalization::None, 0.25);
        let patch = Patch {
            grid_row: 0,
            grid_col: 0,
            pixels: RasterImage::filled(256, 256, 3, 10),
        };
        let boxes = d.detect(&patch).unwrap();
        assert_eq!(
            boxes,
            vec![
                BoundingBox::new(0, 0, 127, 127).with_confidence(0.9),
                BoundingBox::new(200, 240, 255, 255).with_confidence(0.5),
            ]
        );
    }

    #[test]
    fn engine_failure_propagates() {
        let d = ModelDetector::new(Arc::new(Broken), 32, Normalization::None, 0.25);
        let patch = Patch {
            grid_row: 0,
            grid_col: 0,
            pixels: RasterImage::filled(8, 8, 1, 10),
        };
        assert!(matches!(d.detect(&patch), Err(Error::Model(_))));
    }
}
