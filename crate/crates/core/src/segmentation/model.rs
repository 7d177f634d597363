use std::sync::Arc;

use super::{clip_to_boxes, upscale_nearest, MaskResolution, SegmentationResult, Segmenter, SegmenterCapabilities};
use crate::adapter::{prepare_input, LowResMask, Normalization, PromptTensor, PromptableEngine, SegmenterAdapterConfig};
use crate::error::{Error, Result};
use crate::imagecore::{BinaryMask, Raster, RasterImage};
use crate::prompting::{BoundingBox, PixelPoint, PromptSet};

/// Segmenter backed by an exported promptable-segmentation model
/// (image encoder + prompt decoder).
///
/// Each box is decoded separately together with the points it contains;
/// points outside every box are decoded on their own. Low-resolution
/// outputs are thresholded, upscaled by nearest neighbor and combined by
/// union. With `clip_to_boxes`, box-decoded masks are cut to their box.
pub struct ModelSegmenter<E: PromptableEngine> {
    engine: Arc<E>,
    input_size: u32,
    normalization: Normalization,
    mask_threshold: f32,
    clip_to_boxes: bool,
    mask_resolution: u32,
}

impl<E: PromptableEngine> ModelSegmenter<E> {
    pub fn new(engine: Arc<E>, config: &SegmenterAdapterConfig, mask_resolution: u32) -> Self {
        Self {
            engine,
            input_size: config.input_size,
            normalization: config.normalization.clone(),
            mask_threshold: config.mask_threshold,
            clip_to_boxes: config.clip_to_boxes,
            mask_resolution,
        }
    }

    pub fn set_clip_to_boxes(&mut self, clip: bool) {
        self.clip_to_boxes = clip;
    }

    fn scale(&self, v: f32, extent: u32) -> f32 {
        v * self.input_size as f32 / extent as f32
    }

    fn encode(&self, w: u32, h: u32, bbox: Option<&BoundingBox>, pos: &[PixelPoint], neg: &[PixelPoint]) -> PromptTensor {
        let mut t = PromptTensor::default();
        let mut push = |x: f32, y: f32, label: f32| {
            t.coords.push([self.scale(x, w), self.scale(y, h)]);
            t.labels.push(label);
        };
        for p in pos {
            push(p.x as f32 + 0.5, p.y as f32 + 0.5, 1.0);
        }
        for p in neg {
            push(p.x as f32 + 0.5, p.y as f32 + 0.5, 0.0);
        }
        if let Some(b) = bbox {
            push(b.x_min as f32, b.y_min as f32, 2.0);
            push(b.x_max as f32 + 1.0, b.y_max as f32 + 1.0, 3.0);
        }
        t
    }

    fn binarize(&self, low: &LowResMask, w: u32, h: u32) -> Result<BinaryMask> {
        if low.logits.len() != low.width as usize * low.height as usize {
            return Err(Error::Model(format!(
                "decoder returned {} logits for a {}x{} mask",
                low.logits.len(),
                low.width,
                low.height
            )));
        }
        let bits = low.logits.iter().map(|&v| v > self.mask_threshold).collect();
        let native = BinaryMask::from_bits(low.width, low.height, bits)?;
        Ok(upscale_nearest(&native, w, h))
    }
}

impl<E: PromptableEngine> Segmenter for ModelSegmenter<E> {
    fn name(&self) -> &str {
        "model"
    }

    fn capabilities(&self) -> SegmenterCapabilities {
        SegmenterCapabilities {
            accepts_boxes: true,
            accepts_points: true,
            native_mask_resolution: MaskResolution::Fixed(self.mask_resolution),
        }
    }

    fn segment(&self, patch: &RasterImage, prompts: &PromptSet) -> Result<SegmentationResult> {
        let (w, h) = patch.dimensions();
        prompts.validate(w, h)?;
        self.capabilities().check(prompts)?;
        let embedding = self.engine.embed(&prepare_input(patch, self.input_size, &self.normalization))?;

        let in_box =
            |b: &BoundingBox, pts: &[PixelPoint]| -> Vec<PixelPoint> { pts.iter().copied().filter(|p| b.contains(p.x, p.y)).collect() };
        let mut mask = BinaryMask::new(w, h);
        let mut scores = Vec::new();
        for b in &prompts.boxes {
            let tensor = self.encode(
                w,
                h,
                Some(b),
                &in_box(b, &prompts.positive_points),
                &in_box(b, &prompts.negative_points),
            );
            let low = self.engine.decode(&embedding, &tensor)?;
            let mut part = self.binarize(&low, w, h)?;
            if self.clip_to_boxes {
                part = clip_to_boxes(&part, &PromptSet::from_boxes(vec![*b]));
            }
            scores.push(low.score);
            mask = mask.union(&part)?;
        }

        let outside = |pts: &[PixelPoint]| -> Vec<PixelPoint> {
            pts.iter()
                .copied()
                .filter(|p| !prompts.boxes.iter().any(|b| b.contains(p.x, p.y)))
                .collect()
        };
        let (pos, neg) = (outside(&prompts.positive_points), outside(&prompts.negative_points));
        if !pos.is_empty() {
            let low = self.engine.decode(&embedding, &self.encode(w, h, None, &pos, &neg))?;
            scores.push(low.score);
            mask = mask.union(&self.binarize(&low, w, h)?)?;
        }

        let score = if scores.is_empty() || mask.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f32>() / scores.len() as f32
        };
        Ok(SegmentationResult {
            mask,
            score: score.clamp(0.0, 1.0),
        })
    }
}

#[cfg(feature = "onnx")]
impl ModelSegmenter<crate::adapter::onnx::OnnxPromptableEngine> {
    /// Loads the tract-backed encoder/decoder pair named by an adapter
    /// config file.
    pub fn load(config_path: &std::path::Path) -> Result<Self> {
        let (config, base): (SegmenterAdapterConfig, _) = crate::adapter::read_adapter_config(config_path)?;
        let engine =
            crate::adapter::onnx::OnnxPromptableEngine::load(&base.join(&config.encoder), &base.join(&config.decoder), config.input_size)?;
        let resolution = engine.mask_resolution();
        Ok(Self::new(Arc::new(engine), &config, resolution))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::ModelInput;
    use crate::prompting::Polarity;

    /// Fake engine: "segments" the square around each box/point in a
    /// 16x16 grid over a 64x64 model input, plus a fixed leak pixel.
    struct Squares;

    impl PromptableEngine for Squares {
        type Embedding = u32;

        fn embed(&self, input: &ModelInput) -> Result<u32> {
            Ok(input.size)
        }

        fn decode(&self, size: &u32, prompt: &PromptTensor) -> Result<LowResMask> {
            let cell = *size as f32 / 16.0;
            let mut logits = vec![-1.0f32; 256];
            let corners: Vec<_> = prompt.coords.iter().zip(&prompt.labels).filter(|(_, &l)| l >= 2.0).collect();
            if corners.len() == 2 {
                let (a, b) = (corners[0].0, corners[1].0);
                let (x0, y0) = ((a[0] / cell) as usize, (a[1] / cell) as usize);
                let (x1, y1) = (((b[0] / cell).ceil() as usize).min(16), ((b[1] / cell).ceil() as usize).min(16));
                for y in y0..y1 {
                    for x in x0..x1 {
                        logits[y * 16 + x] = 1.0;
                    }
                }
            }
            for (c, &l) in prompt.coords.iter().zip(&prompt.labels) {
                if l == 1.0 {
                    logits[(c[1] / cell) as usize * 16 + (c[0] / cell) as usize] = 1.0;
                }
            }
            logits[0] = 1.0; // leak outside any box
            Ok(LowResMask {
                width: 16,
                height: 16,
                logits,
                score: 0.8,
            })
        }
    }

    fn segmenter(clip: bool) -> ModelSegmenter<Squares> {
        let cfg = SegmenterAdapterConfig {
            encoder: "e".into(),
            decoder: "d".into(),
            input_size: 64,
            normalization: Normalization::None,
            mask_threshold: 0.0,
            clip_to_boxes: clip,
        };
        ModelSegmenter::new(Arc::new(Squares), &cfg, 16)
    }

    #[test]
    fn clipping_keeps_mask_inside_boxes() {
        let patch = RasterImage::filled(32, 32, 3, 100);
        let b = BoundingBox::new(8, 8, 15, 15);
        let prompts = PromptSet::from_boxes(vec![b]);
        let clipped = segmenter(true).segment(&patch, &prompts).unwrap();
        let mut expected = BinaryMask::new(32, 32);
        expected.fill_box(&b, true);
        assert_eq!(clipped.mask, expected);
        assert!((clipped.score - 0.8).abs() < 1e-6);

        let leaky = segmenter(false).segment(&patch, &prompts).unwrap();
        assert!(leaky.mask.get(0, 0));
        assert!(leaky.mask.get(1, 1));
    }

    #[test]
    fn native_resolution_upscaled_by_nearest() {
        let patch = RasterImage::filled(16, 16, 1, 100);
        let b = BoundingBox::new(0, 0, 7, 3);
        let out = segmenter(true).segment(&patch, &PromptSet::from_boxes(vec![b])).unwrap();
        let mut expected = BinaryMask::new(16, 16);
        expected.fill_box(&b, true);
        assert_eq!(out.mask, expected);
        assert_eq!(segmenter(true).capabilities().native_mask_resolution, MaskResolution::Fixed(16));
    }

    #[test]
    fn points_outside_boxes_decoded_separately() {
        let patch = RasterImage::filled(32, 32, 3, 100);
        let mut prompts = PromptSet::from_boxes(vec![BoundingBox::new(0, 0, 3, 3)]);
        prompts.push_point(PixelPoint::new(30, 30), Polarity::Positive);
        let out = segmenter(true).segment(&patch, &prompts).unwrap();
        assert!(out.mask.get(30, 30));
        assert!(out.mask.get(2, 2));
        assert!(!out.mask.get(15, 15));
    }
}
