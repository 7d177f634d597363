use serde::{Deserialize, Serialize};

use plantsam_core::{BoundingBox, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    /// Allowed moves: queued → running → done | failed. A queued job may
    /// also fail directly (e.g. interrupted by a restart).
    pub fn can_move_to(self, next: JobState) -> bool {
        matches!(
            (self, next),
            (JobState::Queued, JobState::Running)
                | (JobState::Queued, JobState::Failed)
                | (JobState::Running, JobState::Done)
                | (JobState::Running, JobState::Failed)
        )
    }

    pub fn is_finished(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobTimings {
    pub queued_at_ms: u64,
    pub started_at_ms: Option<u64>,
    pub finished_at_ms: Option<u64>,
    /// Wall time spent inside the pipeline.
    pub pipeline_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub job_id: String,
    pub image_id: String,
    pub strategy: Strategy,
    pub detector: String,
    pub segmenter: String,
    pub state: JobState,
    /// Path of the result mask once done.
    pub mask: Option<String>,
    pub timings: JobTimings,
    pub error: Option<String>,
    /// Boxes prompted per patch (row-major, patch coordinates).
    #[serde(default)]
    pub patch_boxes: Vec<Vec<BoundingBox>>,
}

impl JobRecord {
    pub(crate) fn advance(&mut self, next: JobState) {
        debug_assert!(self.state.can_move_to(next), "{:?} -> {next:?}", self.state);
        if self.state.can_move_to(next) {
            self.state = next;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct JobRequest {
    pub image_id: String,
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default = "default_detector")]
    pub detector: String,
    #[serde(default = "default_segmenter")]
    pub segmenter: String,
}

fn default_strategy() -> String {
    Strategy::MultiRegion.to_string()
}

fn default_detector() -> String {
    "heuristic".into()
}

fn default_segmenter() -> String {
    crate::backends::DEFAULT_SEGMENTER.into()
}
