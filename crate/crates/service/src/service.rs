use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use tokio::sync::Semaphore;

use plantsam_core::imagecore::io::{decode_mask, encode_mask_png};
use plantsam_core::tiling::{preprocess_and_split, Patch};
use plantsam_core::{segment_image, BinaryMask, PipelineConfig, Raster, Strategy};

use crate::backends::{Backends, DEFAULT_SEGMENTER};
use crate::error::{ServiceError, ServiceResult};
use crate::jobs::{JobRecord, JobRequest, JobState, JobTimings};
use crate::sessions::{apply_prompt, replay, HistoryEntry, PointPrompt, Session, SessionState, SessionStatus, SessionView, UsabilityTag};
use crate::store::{validate_id, write_atomic, DataDir};

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    /// Jobs running at once; also the size of the segmentation thread pool.
    pub workers: usize,
    pub undo_depth: usize,
    pub pipeline: PipelineConfig,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            workers: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            undo_depth: 32,
            pipeline: PipelineConfig::default(),
        }
    }
}

/// Seed for a new session.
#[derive(Debug, Clone)]
pub enum Seed {
    Empty,
    Job(String),
    Mask(BinaryMask),
}

impl std::str::FromStr for Seed {
    type Err = ServiceError;

    fn from_str(s: &str) -> ServiceResult<Self> {
        match s.split_once(':') {
            None if s == "empty" => Ok(Seed::Empty),
            Some(("job", id)) => {
                validate_id("job", id)?;
                Ok(Seed::Job(id.to_string()))
            }
            _ => Err(ServiceError::Validation(format!(
                "seed must be \"empty\" or \"job:<id>\", got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ExportRecord<'a> {
    session_id: &'a str,
    image_id: &'a str,
    mask_version: u64,
    usability_tag: Option<UsabilityTag>,
}

type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

pub struct Service {
    data: DataDir,
    backends: Backends,
    config: ServiceConfig,
    pool: Arc<rayon::ThreadPool>,
    permits: Arc<Semaphore>,
    jobs: Mutex<HashMap<String, JobRecord>>,
    sessions: Mutex<HashMap<String, SessionHandle>>,
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ServiceResult<T> + Send + 'static) -> ServiceResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker panicked: {e}")))?
}

impl Service {
    /// Opens the data directory and restores persisted jobs and sessions.
    /// Jobs that were still pending when the service stopped are marked
    /// failed.
    pub fn open(config: ServiceConfig, backends: Backends) -> ServiceResult<Arc<Self>> {
        let data = DataDir::open(&config.data_dir)?;
        let workers = config.workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .thread_name(|i| format!("segment-{i}"))
            .build()
            .map_err(|e| ServiceError::Internal(format!("worker pool: {e}")))?;
        let service = Self {
            data,
            backends,
            config,
            pool: Arc::new(pool),
            permits: Arc::new(Semaphore::new(workers)),
            jobs: Mutex::new(HashMap::new()),
            sessions: Mutex::new(HashMap::new()),
        };
        service.restore()?;
        Ok(Arc::new(service))
    }

    fn restore(&self) -> ServiceResult<()> {
        for entry in fs::read_dir(self.data.jobs_dir())? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let mut record: JobRecord = serde_json::from_slice(&fs::read(&path)?)?;
                if !record.state.is_finished() {
                    record.state = JobState::Failed;
                    record.error = Some("interrupted by service restart".into());
                    self.persist_job(&record)?;
                }
                lock(&self.jobs).insert(record.job_id.clone(), record);
            }
        }
        for entry in fs::read_dir(self.data.sessions_dir())? {
            let dir = entry?.path();
            let file = dir.join("session.json");
            if !file.is_file() {
                continue;
            }
            let state: SessionState = serde_json::from_slice(&fs::read(&file)?)?;
            let mask = decode_mask(&fs::read(dir.join(format!("v{}.png", state.mask_version)))?)?;
            let id = state.session_id.clone();
            let session = Session {
                state,
                mask,
                patches: None,
            };
            lock(&self.sessions).insert(id, Arc::new(tokio::sync::Mutex::new(session)));
        }
        Ok(())
    }

    pub fn data(&self) -> &DataDir {
        &self.data
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn persist_job(&self, record: &JobRecord) -> ServiceResult<()> {
        let path = self.data.jobs_dir().join(format!("{}.json", record.job_id));
        write_atomic(&path, &serde_json::to_vec_pretty(record)?)
    }

    fn update_job(&self, id: &str, f: impl FnOnce(&mut JobRecord)) -> ServiceResult<JobRecord> {
        let record = {
            let mut jobs = lock(&self.jobs);
            let r = jobs
                .get_mut(id)
                .ok_or_else(|| ServiceError::NotFound(format!("unknown job {id}")))?;
            f(r);
            r.clone()
        };
        self.persist_job(&record)?;
        Ok(record)
    }

    /// Validates and enqueues a pipeline run.
    pub fn submit_job(self: &Arc<Self>, request: JobRequest) -> ServiceResult<String> {
        let strategy: Strategy = request.strategy.parse()?;
        self.data.image_path(&request.image_id)?;
        let segmenter = self.backends.segmenter(&request.segmenter)?;
        let detector =
            self.backends
                .detector(&request.detector)?
                .detector(&self.data, &request.image_id, &self.config.pipeline.detector)?;

        let job_id = uuid::Uuid::new_v4().simple().to_string();
        let record = JobRecord {
            job_id: job_id.clone(),
            image_id: request.image_id.clone(),
            strategy,
            detector: request.detector,
            segmenter: request.segmenter,
            state: JobState::Queued,
            mask: None,
            timings: JobTimings {
                queued_at_ms: now_ms(),
                ..JobTimings::default()
            },
            error: None,
            patch_boxes: Vec::new(),
        };
        self.persist_job(&record)?;
        lock(&self.jobs).insert(job_id.clone(), record);

        let service = self.clone();
        let id = job_id.clone();
        tokio::spawn(async move {
            let _permit = match service.permits.clone().acquire_owned().await {
                Ok(p) => p,
                Err(_) => return,
            };
            if let Err(e) = service.update_job(&id, |r| {
                r.advance(JobState::Running);
                r.timings.started_at_ms = Some(now_ms());
            }) {
                tracing::error!(job = %id, error = %e, "cannot start job");
                return;
            }
            let svc = service.clone();
            let image_id = request.image_id.clone();
            let result = blocking(move || {
                let image = svc.data.load_image(&image_id)?;
                let mut config = svc.config.pipeline.clone();
                config.strategy = strategy;
                config.workers = None;
                let out = svc
                    .pool
                    .install(|| segment_image(&image, detector.as_ref(), segmenter.as_ref(), &config))?;
                let png = encode_mask_png(&out.mask)?;
                Ok((out, png))
            })
            .await;
            let result = result.and_then(|(out, png)| {
                write_atomic(&service.data.jobs_dir().join(format!("{id}.png")), &png)?;
                Ok(out)
            });
            let finished = service.update_job(&id, |r| {
                r.timings.finished_at_ms = Some(now_ms());
                match &result {
                    Ok(out) => {
                        r.mask = Some(format!("/jobs/{}/mask", r.job_id));
                        r.timings.pipeline_ms = Some(out.elapsed.as_secs_f64() * 1000.0);
                        r.patch_boxes = out
                            .prompts
                            .iter()
                            .map(|p| p.as_ref().map(|p| p.boxes.clone()).unwrap_or_default())
                            .collect();
                        r.advance(JobState::Done);
                    }
                    Err(e) => {
                        r.error = Some(e.message().to_string());
                        r.advance(JobState::Failed);
                    }
                }
            });
            if let Err(e) = &result {
                tracing::warn!(job = %id, error = %e, "job failed");
            }
            if let Err(e) = finished {
                tracing::error!(job = %id, error = %e, "cannot record job result");
            }
        });
        Ok(job_id)
    }

    pub fn job(&self, id: &str) -> ServiceResult<JobRecord> {
        lock(&self.jobs)
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown job {id}")))
    }

    pub fn jobs(&self) -> Vec<JobRecord> {
        let mut all: Vec<_> = lock(&self.jobs).values().cloned().collect();
        all.sort_by(|a, b| a.timings.queued_at_ms.cmp(&b.timings.queued_at_ms).then(a.job_id.cmp(&b.job_id)));
        all
    }

    /// Polls until the job finishes or `timeout` passes.
    pub async fn wait_for_job(&self, id: &str, timeout: Duration) -> ServiceResult<JobRecord> {
        let start = Instant::now();
        loop {
            let record = self.job(id)?;
            if record.state.is_finished() {
                return Ok(record);
            }
            if start.elapsed() > timeout {
                return Err(ServiceError::Conflict(format!("job {id} still {:?}", record.state)));
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
    }

    pub fn job_mask_png(&self, id: &str) -> ServiceResult<Vec<u8>> {
        let record = self.job(id)?;
        if record.state != JobState::Done {
            return Err(ServiceError::Conflict(format!("job {id} has no mask yet")));
        }
        Ok(fs::read(self.data.jobs_dir().join(format!("{id}.png")))?)
    }

    pub fn job_mask(&self, id: &str) -> ServiceResult<BinaryMask> {
        Ok(decode_mask(&self.job_mask_png(id)?)?)
    }

    fn session(&self, id: &str) -> ServiceResult<SessionHandle> {
        lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown session {id}")))
    }

    fn session_dir(&self, id: &str) -> PathBuf {
        self.data.sessions_dir().join(id)
    }

    fn persist_session(&self, session: &Session) -> ServiceResult<()> {
        let dir = self.session_dir(&session.state.session_id);
        fs::create_dir_all(&dir)?;
        let version = dir.join(format!("v{}.png", session.state.mask_version));
        if !version.is_file() {
            write_atomic(&version, &encode_mask_png(&session.mask)?)?;
        }
        write_atomic(&dir.join("session.json"), &serde_json::to_vec_pretty(&session.state)?)
    }

    fn load_version(&self, session_id: &str, version: u64) -> ServiceResult<BinaryMask> {
        let path = self.session_dir(session_id).join(format!("v{version}.png"));
        if !path.is_file() {
            return Err(ServiceError::NotFound(format!(
                "session {session_id} has no mask version {version}"
            )));
        }
        Ok(decode_mask(&fs::read(path)?)?)
    }

    /// Starts a refinement session on an image.
    pub async fn open_session(&self, image_id: &str, seed: Seed, segmenter: Option<String>) -> ServiceResult<SessionView> {
        validate_id("image", image_id)?;
        if self.data.exports_dir().join(format!("{image_id}.json")).is_file() {
            return Err(ServiceError::Conflict(format!("image {image_id} already has an accepted mask")));
        }
        let data = self.data.clone();
        let id = image_id.to_string();
        let image = blocking(move || data.load_image(&id)).await?;
        let plan = self.config.pipeline.tiling.plan_for(image.width(), image.height())?;

        let (mask, patch_boxes, seed_label, default_segmenter) = match seed {
            Seed::Empty => (
                BinaryMask::new(plan.source_width, plan.source_height),
                Vec::new(),
                "empty".to_string(),
                None,
            ),
            Seed::Mask(mask) => {
                if (mask.width(), mask.height()) != (plan.source_width, plan.source_height) {
                    return Err(ServiceError::Validation("seed mask size differs from image".into()));
                }
                (mask, Vec::new(), "mask".to_string(), None)
            }
            Seed::Job(job_id) => {
                let job = self.job(&job_id)?;
                if job.image_id != image_id {
                    return Err(ServiceError::Validation(format!("job {job_id} ran on image {}", job.image_id)));
                }
                let mask = self.job_mask(&job_id)?;
                (mask, job.patch_boxes, format!("job:{job_id}"), Some(job.segmenter))
            }
        };
        let segmenter = segmenter.or(default_segmenter).unwrap_or_else(|| DEFAULT_SEGMENTER.to_string());
        self.backends.segmenter(&segmenter)?;

        let mut patch_boxes = patch_boxes;
        patch_boxes.resize(plan.patch_count(), Vec::new());
        let state = SessionState {
            session_id: uuid::Uuid::new_v4().simple().to_string(),
            image_id: image_id.to_string(),
            segmenter,
            seed: seed_label,
            width: plan.source_width,
            height: plan.source_height,
            plan,
            patch_boxes,
            prompt_history: Vec::new(),
            undo_stack: Vec::new(),
            redo_stack: Vec::new(),
            status: SessionStatus::Active,
            usability_tag: None,
            mask_version: 0,
            created_at_ms: now_ms(),
        };
        let session = Session {
            state,
            mask,
            patches: None,
        };
        self.persist_session(&session)?;
        let view = session.state.view();
        lock(&self.sessions).insert(view.session_id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
        Ok(view)
    }

    pub async fn session_view(&self, id: &str) -> ServiceResult<SessionView> {
        Ok(self.session(id)?.lock().await.state.view())
    }

    /// Sessions sorted by creation time, optionally filtered.
    pub async fn list_sessions(&self, tag: Option<UsabilityTag>, status: Option<SessionStatus>) -> Vec<SessionView> {
        let handles: Vec<SessionHandle> = lock(&self.sessions).values().cloned().collect();
        let mut out = Vec::new();
        for h in handles {
            let view = h.lock().await.state.view();
            if tag.is_none_or(|t| view.usability_tag == Some(t)) && status.is_none_or(|s| view.status == s) {
                out.push(view);
            }
        }
        out.sort_by(|a, b| a.created_at_ms.cmp(&b.created_at_ms).then(a.session_id.cmp(&b.session_id)));
        out
    }

    fn patches_for(&self, session: &mut Session) -> ServiceResult<Arc<Vec<Patch>>> {
        if let Some(p) = &session.patches {
            return Ok(p.clone());
        }
        let image = self.data.load_image(&session.state.image_id)?;
        let (plan, patches) = preprocess_and_split(&image, &self.config.pipeline.tiling)?;
        if plan != session.state.plan {
            return Err(ServiceError::Conflict("image changed since the session was opened".into()));
        }
        let patches = Arc::new(patches);
        session.patches = Some(patches.clone());
        Ok(patches)
    }

    /// Adds a point prompt and returns the new mask version.
    pub async fn apply_point(self: &Arc<Self>, id: &str, prompt: PointPrompt) -> ServiceResult<u64> {
        let handle = self.session(id)?;
        let mut guard = handle.lock_owned().await;
        guard.state.ensure_active()?;
        guard.state.check_point(&prompt)?;
        let segmenter = self.backends.segmenter(&guard.state.segmenter)?;
        let svc = self.clone();
        blocking(move || {
            let session = &mut *guard;
            let patches = svc.patches_for(session)?;
            let mut history = session.state.prompt_history.clone();
            history.push(prompt);
            let mask = svc.pool.install(|| {
                apply_prompt(
                    &session.mask,
                    &history,
                    &session.state.plan,
                    &patches,
                    &session.state.patch_boxes,
                    segmenter.as_ref(),
                )
            })?;
            let before = session.state.mask_version;
            session.state.prompt_history = history;
            session.state.undo_stack.push(HistoryEntry { prompt, version: before });
            let excess = session.state.undo_stack.len().saturating_sub(svc.config.undo_depth);
            session.state.undo_stack.drain(..excess);
            session.state.redo_stack.clear();
            session.state.mask_version += 1;
            session.mask = mask;
            svc.persist_session(session)?;
            Ok(session.state.mask_version)
        })
        .await
    }

    pub async fn undo(&self, id: &str) -> ServiceResult<u64> {
        let handle = self.session(id)?;
        let mut session = handle.lock().await;
        session.state.ensure_active()?;
        let entry = *session
            .state
            .undo_stack
            .last()
            .ok_or_else(|| ServiceError::Conflict("nothing to undo".into()))?;
        let mask = self.load_version(id, entry.version)?;
        let after = session.state.mask_version;
        session.state.undo_stack.pop();
        session.state.prompt_history.pop();
        session.state.redo_stack.push(HistoryEntry {
            prompt: entry.prompt,
            version: after,
        });
        session.state.mask_version += 1;
        session.mask = mask;
        self.persist_session(&session)?;
        Ok(session.state.mask_version)
    }

    pub async fn redo(&self, id: &str) -> ServiceResult<u64> {
        let handle = self.session(id)?;
        let mut session = handle.lock().await;
        session.state.ensure_active()?;
        let entry = *session
            .state
            .redo_stack
            .last()
            .ok_or_else(|| ServiceError::Conflict("nothing to redo".into()))?;
        let mask = self.load_version(id, entry.version)?;
        let before = session.state.mask_version;
        session.state.redo_stack.pop();
        session.state.prompt_history.push(entry.prompt);
        session.state.undo_stack.push(HistoryEntry {
            prompt: entry.prompt,
            version: before,
        });
        let excess = session.state.undo_stack.len().saturating_sub(self.config.undo_depth);
        session.state.undo_stack.drain(..excess);
        session.state.mask_version += 1;
        session.mask = mask;
        self.persist_session(&session)?;
        Ok(session.state.mask_version)
    }

    /// Freezes the session and exports its mask to `exports/{image_id}.png`.
    pub async fn accept(&self, id: &str) -> ServiceResult<SessionView> {
        let handle = self.session(id)?;
        let mut session = handle.lock().await;
        session.state.ensure_active()?;
        let exports = self.data.exports_dir();
        let image_id = session.state.image_id.clone();
        write_atomic(&exports.join(format!("{image_id}.png")), &encode_mask_png(&session.mask)?)?;
        let record = ExportRecord {
            session_id: &session.state.session_id,
            image_id: &image_id,
            mask_version: session.state.mask_version,
            usability_tag: session.state.usability_tag,
        };
        write_atomic(&exports.join(format!("{image_id}.json")), &serde_json::to_vec_pretty(&record)?)?;
        session.state.status = SessionStatus::Accepted;
        session.state.undo_stack.clear();
        session.state.redo_stack.clear();
        self.persist_session(&session)?;
        Ok(session.state.view())
    }

    pub async fn discard(&self, id: &str) -> ServiceResult<SessionView> {
        let handle = self.session(id)?;
        let mut session = handle.lock().await;
        session.state.ensure_active()?;
        session.state.status = SessionStatus::Discarded;
        session.state.undo_stack.clear();
        session.state.redo_stack.clear();
        self.persist_session(&session)?;
        Ok(session.state.view())
    }

    pub async fn tag(&self, id: &str, tag: UsabilityTag) -> ServiceResult<SessionView> {
        let handle = self.session(id)?;
        let mut session = handle.lock().await;
        session.state.ensure_active()?;
        session.state.usability_tag = Some(tag);
        self.persist_session(&session)?;
        Ok(session.state.view())
    }

    /// Current mask, or a stored version.
    pub async fn session_mask(&self, id: &str, version: Option<u64>) -> ServiceResult<BinaryMask> {
        let handle = self.session(id)?;
        let session = handle.lock().await;
        match version {
            None => Ok(session.mask.clone()),
            Some(v) if v == session.state.mask_version => Ok(session.mask.clone()),
            Some(v) if v > session.state.mask_version => Err(ServiceError::NotFound(format!("session {id} has no mask version {v}"))),
            Some(v) => self.load_version(id, v),
        }
    }

    pub async fn session_mask_png(&self, id: &str, version: Option<u64>) -> ServiceResult<Vec<u8>> {
        Ok(encode_mask_png(&self.session_mask(id, version).await?)?)
    }

    /// Recomputes the session mask from its seed and prompt history.
    pub async fn replay_session(self: &Arc<Self>, id: &str) -> ServiceResult<BinaryMask> {
        let handle = self.session(id)?;
        let mut guard = handle.lock_owned().await;
        let segmenter = self.backends.segmenter(&guard.state.segmenter)?;
        let seed = self.load_version(id, 0)?;
        let svc = self.clone();
        blocking(move || {
            let session = &mut *guard;
            let patches = svc.patches_for(session)?;
            replay(
                &seed,
                &session.state.prompt_history,
                &session.state.plan,
                &patches,
                &session.state.patch_boxes,
                segmenter.as_ref(),
            )
        })
        .await
    }
}
