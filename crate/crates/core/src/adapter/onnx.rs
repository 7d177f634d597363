//! ONNX engines running on tract.
//!
//! The detector is expected to be an end-to-end export emitting rows of
//! `x_min, y_min, x_max, y_max, score[, class]` in input pixels (shape
//! `[1, N, 5+]` or `[N, 5+]`). The segmenter follows the usual split
//! export of a promptable segmenter: an image encoder taking
//! `[1, 3, S, S]`, and a decoder taking `image_embeddings`, `point_coords`,
//! `point_labels`, `mask_input`, `has_mask_input` and `orig_im_size`.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use tract_onnx::prelude::*;

use super::{model_error, DetectionEngine, LowResMask, ModelInput, PromptTensor, PromptableEngine, RawDetection};
use crate::error::Result;

fn image_tensor(input: &ModelInput) -> Result<Tensor> {
    let s = input.size as usize;
    Tensor::from_shape(&[1, 3, s, s], &input.data).map_err(|e| model_error("input tensor", e))
}

pub struct OnnxDetectionEngine {
    plan: Arc<TypedRunnableModel>,
}

impl OnnxDetectionEngine {
    pub fn load(path: &Path, input_size: u32) -> Result<Self> {
        let s = input_size as usize;
        let plan = tract_onnx::onnx()
            .model_for_path(path)
            .and_then(|m| m.with_input_fact(0, f32::fact([1, 3, s, s]).into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| model_error(&format!("loading {}", path.display()), e))?;
        Ok(Self { plan })
    }
}

impl DetectionEngine for OnnxDetectionEngine {
    fn infer(&self, input: &ModelInput) -> Result<Vec<RawDetection>> {
        let out = self
            .plan
            .run(tvec!(image_tensor(input)?.into()))
            .map_err(|e| model_error("detector", e))?;
        let view = out[0].to_plain_array_view::<f32>().map_err(|e| model_error("detector output", e))?;
        let shape = view.shape().to_vec();
        let cols = *shape.last().unwrap_or(&0);
        if cols < 5 || !(shape.len() == 2 || (shape.len() == 3 && shape[0] == 1)) {
            return Err(model_error("detector output", format!("unsupported shape {shape:?}")));
        }
        let flat: Vec<f32> = view.iter().copied().collect();
        Ok(flat
            .chunks_exact(cols)
            .map(|r| RawDetection {
                x_min: r[0],
                y_min: r[1],
                x_max: r[2],
                y_max: r[3],
                score: r[4],
            })
            .collect())
    }
}

const LOW_RES: usize = 256;

pub struct OnnxPromptableEngine {
    encoder: Arc<TypedRunnableModel>,
    decoder: InferenceModel,
    input_size: u32,
    /// Decoder plans per point count.
    plans: Mutex<HashMap<usize, Arc<TypedRunnableModel>>>,
}

impl OnnxPromptableEngine {
    pub fn load(encoder: &Path, decoder: &Path, input_size: u32) -> Result<Self> {
        let s = input_size as usize;
        let enc = tract_onnx::onnx()
            .model_for_path(encoder)
            .and_then(|m| m.with_input_fact(0, f32::fact([1, 3, s, s]).into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| model_error(&format!("loading {}", encoder.display()), e))?;
        let dec = tract_onnx::onnx()
            .model_for_path(decoder)
            .map_err(|e| model_error(&format!("loading {}", decoder.display()), e))?;
        Ok(Self {
            encoder: enc,
            decoder: dec,
            input_size,
            plans: Mutex::new(HashMap::new()),
        })
    }

    /// Side of the square logits grid returned by the decoder.
    pub fn mask_resolution(&self) -> u32 {
        LOW_RES as u32
    }

    fn input_names(&self) -> Result<Vec<String>> {
        let outlets = self.decoder.input_outlets().map_err(|e| model_error("decoder inputs", e))?;
        Ok(outlets.iter().map(|o| self.decoder.nodes[o.node].name.clone()).collect())
    }

    fn plan_for(&self, points: usize, embedding: &Tensor) -> Result<Arc<TypedRunnableModel>> {
        let mut plans = self.plans.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(p) = plans.get(&points) {
            return Ok(p.clone());
        }
        let mut model = self.decoder.clone();
        for (i, name) in self.input_names()?.iter().enumerate() {
            let fact: InferenceFact = match name.as_str() {
                "image_embeddings" => f32::fact(embedding.shape()).into(),
                "point_coords" => f32::fact([1, points, 2]).into(),
                "point_labels" => f32::fact([1, points]).into(),
                "mask_input" => f32::fact([1, 1, LOW_RES, LOW_RES]).into(),
                "has_mask_input" => f32::fact([1]).into(),
                "orig_im_size" => f32::fact([2]).into(),
                other => return Err(model_error("decoder", format!("unexpected input {other}"))),
            };
            model.set_input_fact(i, fact).map_err(|e| model_error("decoder", e))?;
        }
        let plan = model
            .into_optimized()
            .and_then(|m| m.into_runnable())
            .map_err(|e| model_error("decoder", e))?;
        plans.insert(points, plan.clone());
        Ok(plan)
    }
}

impl PromptableEngine for OnnxPromptableEngine {
    type Embedding = Tensor;

    fn embed(&self, input: &ModelInput) -> Result<Tensor> {
        let out = self
            .encoder
            .run(tvec!(image_tensor(input)?.into()))
            .map_err(|e| model_error("encoder", e))?;
        Ok(out[0].clone().into_tensor())
    }

    fn decode(&self, embedding: &Tensor, prompt: &PromptTensor) -> Result<LowResMask> {
        let mut coords: Vec<f32> = prompt.coords.iter().flatten().copied().collect();
        let mut labels = prompt.labels.clone();
        if !labels.iter().any(|&l| l >= 2.0) {
            // padding point expected when no box is given
            coords.extend([0.0, 0.0]);
            labels.push(-1.0);
        }
        let n = labels.len();
        let plan = self.plan_for(n, embedding)?;
        let s = self.input_size as f32;
        let err = |e| model_error("decoder input", e);
        let mut inputs: TVec<TValue> = tvec![];
        for name in self.input_names()? {
            let t = match name.as_str() {
                "image_embeddings" => embedding.clone(),
                "point_coords" => Tensor::from_shape(&[1, n, 2], &coords).map_err(err)?,
                "point_labels" => Tensor::from_shape(&[1, n], &labels).map_err(err)?,
                "mask_input" => Tensor::zero::<f32>(&[1, 1, LOW_RES, LOW_RES]).map_err(err)?,
                "has_mask_input" => Tensor::from_shape(&[1], &[0f32]).map_err(err)?,
                "orig_im_size" => Tensor::from_shape(&[2], &[s, s]).map_err(err)?,
                _ => unreachable!("validated in plan_for"),
            };
            inputs.push(t.into());
        }
        let out = plan.run(inputs).map_err(|e| model_error("decoder", e))?;
        // outputs: masks, scores[, low-resolution masks]
        let masks = out.get(2).unwrap_or(&out[0]);
        let view = masks.to_plain_array_view::<f32>().map_err(|e| model_error("decoder output", e))?;
        let shape = view.shape().to_vec();
        if shape.len() < 2 {
            return Err(model_error("decoder output", format!("unsupported mask shape {shape:?}")));
        }
        let (h, w) = (shape[shape.len() - 2], shape[shape.len() - 1]);
        let logits: Vec<f32> = view.iter().take(w * h).copied().collect();
        let score = out
            .get(1)
            .and_then(|t| t.to_plain_array_view::<f32>().ok().and_then(|v| v.iter().next().copied()))
            .unwrap_or(1.0);
        Ok(LowResMask {
            width: w as u32,
            height: h as u32,
            logits,
            score,
        })
    }
}
