//! Plumbing shared by the model-backed detector and segmenter: adapter
//! configuration files, input normalization, and the engine traits that
//! an inference runtime implements.
//!
//! With the `onnx` feature, [`onnx`] provides engines backed by tract.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::imagecore::{Raster, RasterImage};

#[cfg(feature = "onnx")]
pub mod onnx;

/// Pixel normalization applied after scaling samples to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum Normalization {
    /// `(v - mean[c]) / std[c]` per channel.
    Fixed { mean: [f32; 3], std: [f32; 3] },
    /// Zero mean and unit variance computed over the whole patch.
    #[default]
    Standardize,
    /// Raw [0, 1] values.
    None,
}

/// Channel-first `3 x size x size` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub size: u32,
    pub data: Vec<f32>,
}

pub fn prepare_input(patch: &RasterImage, size: u32, normalization: &Normalization) -> ModelInput {
    let rgb = if patch.channels() == 3 {
        patch.clone()
    } else {
        RasterImage::from_fn(patch.width(), patch.height(), 3, |x, y| {
            let v = patch.pixel(x, y)[0];
            [v, v, v]
        })
    };
    let buf = RgbImage::from_raw(rgb.width(), rgb.height(), rgb.into_data()).expect("rgb geometry");
    let buf = if buf.dimensions() == (size, size) {
        buf
    } else {
        image::imageops::resize(&buf, size, size, FilterType::Triangle)
    };

    let plane = size as usize * size as usize;
    let mut data = vec![0f32; 3 * plane];
    for (i, px) in buf.pixels().enumerate() {
        for c in 0..3 {
            data[c * plane + i] = px.0[c] as f32 / 255.0;
        }
    }
    match normalization {
        Normalization::Fixed { mean, std } => {
            for c in 0..3 {
                for v in &mut data[c * plane..(c + 1) * plane] {
                    *v = (*v - mean[c]) / std[c];
                }
            }
        }
        Normalization::Standardize => {
            let n = data.len() as f64;
            let mu = data.iter().map(|&v| v as f64).sum::<f64>() / n;
            let var = data.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt().max(1e-6);
            for v in &mut data {
                *v = ((*v as f64 - mu) / sd) as f32;
            }
        }
        Normalization::None => {}
    }
    ModelInput { size, data }
}

/// One raw detection in model-input pixel space; `x_max`/`y_max` are
/// exclusive edges.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawDetection {
    pub x_min: f32,
    pub y_min: f32,
    pub x_max: f32,
    pub y_max: f32,
    pub score: f32,
}

pub trait DetectionEngine: Send + Sync {
    fn infer(&self, input: &ModelInput) -> Result<Vec<RawDetection>>;
}

/// Point prompts in model-input space using the usual promptable
/// segmenter label convention: 1 positive, 0 negative, 2/3 box corners.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptTensor {
    pub coords: Vec<[f32; 2]>,
    pub labels: Vec<f32>,
}

/// Low-resolution mask logits returned by a decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct LowResMask {
    pub width: u32,
    pub height: u32,
    pub logits: Vec<f32>,
    pub score: f32,
}

pub trait PromptableEngine: Send + Sync {
    type Embedding: Send + Sync;

    fn embed(&self, input: &ModelInput) -> Result<Self::Embedding>;

    fn decode(&self, embedding: &Self::Embedding, prompt: &PromptTensor) -> Result<LowResMask>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorAdapterConfig {
    /// Model file, relative to the config file.
    pub model: PathBuf,
    #[serde(default = "default_detector_size")]
    pub input_size: u32,
    #[serde(default)]
    pub normalization: Normalization,
    pub confidence_threshold: Option<f32>,
}

fn default_detector_size() -> u32 {
    640
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterAdapterConfig {
    /// Image encoder model, relative to the config file.
    pub encoder: PathBuf,
    /// Prompt/mask decoder model, relative to the config file.
    pub decoder: PathBuf,
    #[serde(default = "default_segmenter_size")]
    pub input_size: u32,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub mask_threshold: f32,
    #[serde(default = "yes")]
    pub clip_to_boxes: bool,
}

fn default_segmenter_size() -> u32 {
    1024
}

fn yes() -> bool {
    true
}

/// Reads an adapter config and resolves its model paths against the
/// config file's directory.
pub fn read_adapter_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, PathBuf)> {
    let text = fs::read_to_string(path)?;
    let config: T = serde_json::from_str(&text)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, base))
}

/// Maps a float box in model space back to an inclusive box in a
/// `width`x`height` patch. `None` if nothing of it remains inside.
pub fn rescale_detection(det: &RawDetection, model_size: u32, width: u32, height: u32) -> Option<crate::prompting::BoundingBox> {
    if !(det.x_min.is_finite() && det.y_min.is_finite() && det.x_max.is_finite() && det.y_max.is_finite()) {
        return None;
    }
    let sx = width as f32 / model_size as f32;
    let sy = height as f32 / model_size as f32;
    let x0 = (det.x_min * sx).floor().max(0.0);
    let y0 = (det.y_min * sy).floor().max(0.0);
    let x1 = ((det.x_max * sx).ceil() - 1.0).min(width as f32 - 1.0);
    let y1 = ((det.y_max * sy).ceil() - 1.0).min(height as f32 - 1.0);
    if x1 < x0 || y1 < y0 {
        return None;
    }
    Some(crate::prompting::BoundingBox {
        x_min: x0 as u32,
        y_min: y0 as u32,
        x_max: x1 as u32,
        y_max: y1 as u32,
        confidence: det.score.clamp(0.0, 1.0),
    })
}

#[cfg(feature = "onnx")]
pub(crate) fn model_error(context: &str, e: impl std::fmt::Display) -> crate::error::Error {
    crate::error::Error::Model(format!("{context}: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_normalization_is_channel_first() {
        let img = RasterImage::from_fn(2, 2, 3, |_, _| [255, 0, 51]);
        let input = prepare_input(
            &img,
            2,
            &Normalization::Fixed {
                mean: [0.5, 0.0, 0.0],
                std: [0.5, 1.0, 0.1],
            },
        );
        assert_eq!(input.data.len(), 12);
        assert!(input.data[..4].iter().all(|&v| (v - 1.0).abs() < 1e-6));
        assert!(input.data[4..8].iter().all(|&v| v == 0.0));
        assert!(input.data[8..].iter().all(|&v| (v - 2.0).abs() < 1e-5));
    }

    #[test]
    fn standardize_gives_zero_mean_unit_variance() {
        let img = RasterImage::from_fn(8, 8, 1, |x, y| [(x * 30 + y) as u8, 0, 0]);
        let input = prepare_input(&img, 16, &Normalization::Standardize);
        let n = input.data.len() as f64;
        let mu = input.data.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = input.data.iter().map(|&v| (v as f64 - mu).powi(2)).sum::<f64>() / n;
        assert!(mu.abs() < 1e-5);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rescale_clamps_and_drops() {
        let d = RawDetection {
            x_min: 10.0,
            y_min: 0.0,
            x_max: 20.0,
            y_max: 700.0,
            score: 0.8,
        };
        let b = rescale_detection(&d, 640, 320, 320).unwrap();
        assert_eq!((b.x_min, b.y_min, b.x_max, b.y_max), (5, 0, 9, 319));
        let outside = RawDetection {
            x_min: 700.0,
            x_max: 800.0,
            ..d
        };
        assert!(rescale_detection(&outside, 640, 320, 320).is_none());
    }

    #[test]
    fn adapter_config_defaults() {
        let cfg: SegmenterAdapterConfig = serde_json::from_str(r#"{"encoder":"e.onnx","decoder":"d.onnx"}"#).unwrap();
        assert_eq!(cfg.input_size, 1024);
        assert!(cfg.clip_to_boxes);
        assert_eq!(cfg.normalization, Normalization::Standardize);
        let cfg: DetectorAdapterConfig = serde_json::from_str(
            r#"{"model":"y.onnx","input_size":320,"normalization":{"kind":"fixed","mean":[0,0,0],"std":[1,1,1]},"confidence_threshold":0.4}"#,
        )
        .unwrap();
        assert_eq!(cfg.input_size, 320);
        assert_eq!(cfg.confidence_threshold, Some(0.4));
    }
}
