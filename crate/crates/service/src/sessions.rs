//! Point-prompt refinement sessions.
//!
//! A point re-segments only the patch containing it, with the patch's
//! seed boxes plus every accumulated point in that patch. The new patch
//! mask is merged with the current one so that a positive point can only
//! add pixels (union) and a negative point can only remove them
//! (intersection). Because the merge depends only on the history prefix,
//! replaying the history from the seed mask reproduces the current mask.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use plantsam_core::tiling::Patch;
use plantsam_core::{BinaryMask, BoundingBox, PatchPlan, PixelPoint, Polarity, PromptSet, Raster, Segmenter};

use crate::error::{ServiceError, ServiceResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Accepted,
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UsabilityTag {
    Usable,
    Unusable,
}

impl std::str::FromStr for UsabilityTag {
    type Err = ServiceError;

    fn from_str(s: &str) -> ServiceResult<Self> {
        match s {
            "usable" => Ok(UsabilityTag::Usable),
            "unusable" => Ok(UsabilityTag::Unusable),
            other => Err(ServiceError::Validation(format!("unknown usability tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointPrompt {
    pub x: u32,
    pub y: u32,
    pub polarity: Polarity,
}

/// Undo and redo entries point at stored mask versions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub prompt: PointPrompt,
    /// For undo: version before the prompt. For redo: version after it.
    pub version: u64,
}

/// Persistent session state. The current mask and the patch cache live
/// beside it in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub image_id: String,
    pub segmenter: String,
    /// `"empty"` or `"job:<id>"`.
    pub seed: String,
    pub width: u32,
    pub height: u32,
    pub plan: PatchPlan,
    /// Seed boxes per patch (row-major, patch coordinates).
    pub patch_boxes: Vec<Vec<BoundingBox>>,
    pub prompt_history: Vec<PointPrompt>,
    pub undo_stack: Vec<HistoryEntry>,
    pub redo_stack: Vec<HistoryEntry>,
    pub status: SessionStatus,
    pub usability_tag: Option<UsabilityTag>,
    pub mask_version: u64,
    pub created_at_ms: u64,
}

/// What clients see of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub image_id: String,
    pub segmenter: String,
    pub seed: String,
    pub width: u32,
    pub height: u32,
    pub status: SessionStatus,
    pub usability_tag: Option<UsabilityTag>,
    pub mask_version: u64,
    pub prompt_history: Vec<PointPrompt>,
    pub undo_depth: usize,
    pub redo_depth: usize,
    pub created_at_ms: u64,
}

impl SessionState {
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            image_id: self.image_id.clone(),
            segmenter: self.segmenter.clone(),
            seed: self.seed.clone(),
            width: self.width,
            height: self.height,
            status: self.status,
            usability_tag: self.usability_tag,
            mask_version: self.mask_version,
            prompt_history: self.prompt_history.clone(),
            undo_depth: self.undo_stack.len(),
            redo_depth: self.redo_stack.len(),
            created_at_ms: self.created_at_ms,
        }
    }

    pub fn ensure_active(&self) -> ServiceResult<()> {
        match self.status {
            SessionStatus::Active => Ok(()),
            other => Err(ServiceError::Conflict(format!(
                "session {} is {}",
                self.session_id,
                serde_json::to_value(other)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default()
            ))),
        }
    }

    pub fn check_point(&self, p: &PointPrompt) -> ServiceResult<()> {
        if p.x >= self.width || p.y >= self.height {
            return Err(ServiceError::Validation(format!(
                "point ({}, {}) outside {}x{} image",
                p.x, p.y, self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Applies the last prompt of `history` to `mask`.
pub fn apply_prompt(
    mask: &BinaryMask,
    history: &[PointPrompt],
    plan: &PatchPlan,
    patches: &[Patch],
    patch_boxes: &[Vec<BoundingBox>],
    segmenter: &dyn Segmenter,
) -> ServiceResult<BinaryMask> {
    let last = *history.last().ok_or(ServiceError::Internal("empty prompt history".into()))?;
    let (row, col) = plan.cell_of(last.x, last.y);
    let index = (row * plan.cols + col) as usize;
    let patch = patches
        .get(index)
        .ok_or_else(|| ServiceError::Internal(format!("no patch r{row} c{col}")))?;
    let (ox, oy) = plan.origin(row, col);
    let s = plan.patch_size;

    let mut prompts = PromptSet::from_boxes(patch_boxes.get(index).cloned().unwrap_or_default());
    for p in history {
        if plan.cell_of(p.x, p.y) == (row, col) {
            prompts.push_point(PixelPoint::new(p.x - ox, p.y - oy), p.polarity);
        }
    }
    let segmented = segmenter.segment(&patch.pixels, &prompts)?.mask;
    let window = mask.window(ox, oy, s, s);
    let merged = match last.polarity {
        Polarity::Positive => window.union(&segmented)?,
        Polarity::Negative => window.intersection(&segmented)?,
    };
    let mut out = mask.clone();
    out.paste(&merged, ox, oy);
    Ok(out)
}

/// Recomputes the mask from the seed by applying every history prefix.
pub fn replay(
    seed: &BinaryMask,
    history: &[PointPrompt],
    plan: &PatchPlan,
    patches: &[Patch],
    patch_boxes: &[Vec<BoundingBox>],
    segmenter: &dyn Segmenter,
) -> ServiceResult<BinaryMask> {
    let mut mask = seed.clone();
    for i in 1..=history.len() {
        mask = apply_prompt(&mask, &history[..i], plan, patches, patch_boxes, segmenter)?;
    }
    Ok(mask)
}

/// In-memory companion of [`SessionState`].
pub struct Session {
    pub state: SessionState,
    pub mask: BinaryMask,
    pub patches: Option<Arc<Vec<Patch>>>,
}
