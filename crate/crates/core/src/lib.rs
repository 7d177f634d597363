//! Segmentation toolkit for digitized herbarium sheets.
//!
//! Large sheet images are cleaned with a morphological opening, cut into
//! square patches, prompted with boxes from a detector, segmented by a
//! promptable backend and stitched back together. Around that pipeline sit
//! evaluation (IoU/Dice per taxon), analytics (heatmaps, coverage, crops)
//! and detection-dataset generation.
//!
//! Numeric results are generic over [`Scalar`]; the aliases below fix the
//! type used by the binaries.

pub mod adapter;
pub mod analytics;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod imagecore;
pub mod prompting;
pub mod scalar;
pub mod segmentation;
pub mod synthetic;
pub mod tiling;

pub use error::{Error, Result};
pub use imagecore::{BinaryMask, Connectivity, Raster, RasterImage};
pub use prompting::{BoundingBox, PixelPoint, Polarity, PromptSet, Strategy};
pub use scalar::{Rational, Scalar};
pub use segmentation::{segment_image, PipelineConfig, PipelineOutput, ReferenceSegmenter, Segmenter};
pub use tiling::{PatchPlan, TilingConfig};

/// Scalar used for reported scores.
pub type Score = f64;

pub type EvaluationRecord = evaluation::EvaluationRecord<Score>;
pub type EvaluationReport = evaluation::EvaluationReport<Score>;
pub type TaxonReport = evaluation::TaxonReport<Score>;
pub type HeatMap = analytics::HeatMap<f32>;
pub type CoverageStat = analytics::CoverageStat<Score>;
pub type RatioSummary = prompting::RatioSummary<Score>;
