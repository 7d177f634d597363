use std::collections::BTreeMap;
use std::sync::Arc;

use plantsam_core::prompting::{Detector, DetectorConfig, HeuristicConfig, HeuristicDetector, MaskOracleDetector};
use plantsam_core::{ReferenceSegmenter, Segmenter};

use crate::error::{ServiceError, ServiceResult};
use crate::store::DataDir;

/// Builds a detector for one image. Oracle-style detectors need
/// per-image data, hence a factory instead of a shared instance.
pub trait DetectorProvider: Send + Sync {
    fn detector(&self, data: &DataDir, image_id: &str, config: &DetectorConfig) -> ServiceResult<Arc<dyn Detector>>;
}

/// Boxes from `masks/{image_id}.png`.
pub struct OracleProvider;

impl DetectorProvider for OracleProvider {
    fn detector(&self, data: &DataDir, image_id: &str, config: &DetectorConfig) -> ServiceResult<Arc<dyn Detector>> {
        Ok(Arc::new(MaskOracleDetector::new(data.truth_mask(image_id)?, *config)))
    }
}

pub struct HeuristicProvider;

impl DetectorProvider for HeuristicProvider {
    fn detector(&self, _: &DataDir, _: &str, config: &DetectorConfig) -> ServiceResult<Arc<dyn Detector>> {
        Ok(Arc::new(HeuristicDetector::new(HeuristicConfig {
            detector: *config,
            ..HeuristicConfig::default()
        })))
    }
}

/// A ready-made detector shared by every job, e.g. a loaded model.
pub struct SharedDetector(pub Arc<dyn Detector>);

impl DetectorProvider for SharedDetector {
    fn detector(&self, _: &DataDir, _: &str, _: &DetectorConfig) -> ServiceResult<Arc<dyn Detector>> {
        Ok(self.0.clone())
    }
}

/// Named detector and segmenter backends.
#[derive(Clone)]
pub struct Backends {
    detectors: BTreeMap<String, Arc<dyn DetectorProvider>>,
    segmenters: BTreeMap<String, Arc<dyn Segmenter>>,
}

pub const DEFAULT_SEGMENTER: &str = "reference";

impl Backends {
    pub fn empty() -> Self {
        Self {
            detectors: BTreeMap::new(),
            segmenters: BTreeMap::new(),
        }
    }

    /// `oracle` and `heuristic` detectors, `reference` segmenter.
    pub fn standard() -> Self {
        let mut b = Self::empty();
        b.register_detector("oracle", Arc::new(OracleProvider));
        b.register_detector("heuristic", Arc::new(HeuristicProvider));
        b.register_segmenter(DEFAULT_SEGMENTER, Arc::new(ReferenceSegmenter::default()));
        b
    }

    pub fn register_detector(&mut self, name: &str, provider: Arc<dyn DetectorProvider>) {
        self.detectors.insert(name.to_string(), provider);
    }

    pub fn register_segmenter(&mut self, name: &str, segmenter: Arc<dyn Segmenter>) {
        self.segmenters.insert(name.to_string(), segmenter);
    }

    pub fn detector(&self, name: &str) -> ServiceResult<&Arc<dyn DetectorProvider>> {
        self.detectors.get(name).ok_or_else(|| {
            ServiceError::Validation(format!(
                "unknown detector {name:?}; available: {}",
                self.detectors.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }

    pub fn segmenter(&self, name: &str) -> ServiceResult<Arc<dyn Segmenter>> {
        self.segmenters.get(name).cloned().ok_or_else(|| {
            ServiceError::Validation(format!(
                "unknown segmenter {name:?}; available: {}",
                self.segmenters.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}
