use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use clipmap_core::ingest::refresh_features;
use clipmap_core::session::compute_embedding;
use clipmap_core::{Error, Result, SessionState};
use log::{info, warn};

use crate::error::ApiError;
use crate::jobs::{JobKind, JobState, JobStatus, JobTable};

#[derive(Debug, Clone, Default)]
pub struct ServerConfig {
    /// Session file rewritten after every successful mutation.
    pub session_path: Option<PathBuf>,
    /// Seed for the k-means restarts behind `/api/metrics`.
    pub metrics_seed: u64,
}

#[derive(Debug, Clone)]
pub enum JobRequest {
    /// Embed the current features without advancing the round.
    Embed,
    /// Close the round: optional feature refresh, then re-embed.
    Round { manifest: Option<PathBuf> },
}

struct Inner {
    snapshot: RwLock<Arc<SessionState>>,
    writer: Mutex<()>,
    jobs: Mutex<JobTable>,
    cancel: AtomicBool,
    config: ServerConfig,
}

/// Shared server state. Readers clone the current snapshot; writers build a
/// new snapshot and swap it in only on success.
#[derive(Clone)]
pub struct AppState {
    inner: Arc<Inner>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl AppState {
    pub fn new(session: SessionState, config: ServerConfig) -> Self {
        AppState {
            inner: Arc::new(Inner {
                snapshot: RwLock::new(Arc::new(session)),
                writer: Mutex::new(()),
                jobs: Mutex::new(JobTable::default()),
                cancel: AtomicBool::new(false),
                config,
            }),
        }
    }

    pub fn config(&self) -> &ServerConfig {
        &self.inner.config
    }

    pub fn snapshot(&self) -> Arc<SessionState> {
        self.inner.snapshot.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    /// Applies `f` to a copy of the session. The copy replaces the snapshot
    /// (and is saved) only if `f` and the save both succeed.
    pub fn mutate<T>(&self, f: impl FnOnce(&mut SessionState) -> Result<T>) -> Result<T> {
        let _writer = lock(&self.inner.writer);
        let mut staged = (*self.snapshot()).clone();
        let out = f(&mut staged)?;
        if let Some(path) = &self.inner.config.session_path {
            staged.save(path)?;
        }
        *self.inner.snapshot.write().unwrap_or_else(|p| p.into_inner()) = Arc::new(staged);
        Ok(out)
    }

    pub fn job(&self, id: u64) -> Option<JobStatus> {
        lock(&self.inner.jobs).get(id).cloned()
    }

    pub fn active_job(&self) -> Option<JobStatus> {
        lock(&self.inner.jobs).active().cloned()
    }

    /// Asks the running job to stop at its next progress report.
    pub fn cancel_active(&self) -> Option<u64> {
        let id = lock(&self.inner.jobs).active;
        if id.is_some() {
            self.inner.cancel.store(true, Ordering::SeqCst);
        }
        id
    }

    /// Schedules a background job. `prepare` runs as part of the same
    /// atomic check (e.g. recording time of annotation); it is not applied
    /// if the job cannot start.
    pub fn start_job(
        &self,
        request: JobRequest,
        prepare: impl FnOnce(&mut SessionState) -> Result<()>,
    ) -> std::result::Result<JobStatus, ApiError> {
        let mut jobs = lock(&self.inner.jobs);
        if let Some(active) = jobs.active() {
            return Err(ApiError::new(
                axum::http::StatusCode::CONFLICT,
                "job_running",
                format!("job {} is still {:?}", active.job_id, active.state),
            )
            .with_job(Some(active.job_id)));
        }
        let is_round = matches!(request, JobRequest::Round { .. });
        self.mutate(|s| {
            prepare(s)?;
            if is_round {
                s.can_advance()?;
            }
            Ok(())
        })?;

        let kind = match &request {
            JobRequest::Round { manifest: Some(_) } => JobKind::Refresh,
            _ => JobKind::Embed,
        };
        let job = jobs.create(kind);
        drop(jobs);
        self.inner.cancel.store(false, Ordering::SeqCst);

        let state = self.clone();
        let id = job.job_id;
        std::thread::spawn(move || state.run_job(id, request));
        Ok(job)
    }

    fn update_job(&self, id: u64, f: impl FnOnce(&mut JobStatus)) {
        if let Some(job) = lock(&self.inner.jobs).get_mut(id) {
            f(job);
        }
    }

    fn run_job(&self, id: u64, request: JobRequest) {
        self.update_job(id, |j| {
            j.transition(JobState::Running);
        });
        match self.execute(id, &request) {
            Ok(message) => {
                info!("job {id} done: {message}");
                lock(&self.inner.jobs).finish(id, JobState::Done, Some(message));
            }
            Err(e) => {
                warn!("job {id} failed: {e}");
                lock(&self.inner.jobs).finish(id, JobState::Failed, Some(e.to_string()));
            }
        }
    }

    fn execute(&self, id: u64, request: &JobRequest) -> Result<String> {
        let base = self.snapshot();
        let refreshed = match request {
            JobRequest::Round { manifest: Some(path) } => Some((refresh_features(&base.dataset, path)?, path.clone())),
            _ => None,
        };
        let dataset = refreshed.as_ref().map_or(&*base.dataset, |r| &r.0);
        let view = compute_embedding(dataset, &base.tsne, |p| {
            if self.inner.cancel.load(Ordering::SeqCst) {
                return ControlFlow::Break(());
            }
            self.update_job(id, |j| j.set_progress(p.iteration as f64 / p.total as f64));
            ControlFlow::Continue(())
        })?;

        self.mutate(|s| {
            if !Arc::ptr_eq(&s.dataset, &base.dataset) {
                return Err(Error::Validation("features changed while the job was running".into()));
            }
            match request {
                JobRequest::Embed => {
                    s.set_embedding(view)?;
                    Ok(format!("embedding ready for round {}", s.round))
                }
                JobRequest::Round { .. } => {
                    s.can_advance()?;
                    let outcome = s.commit_round(refreshed, Some(view));
                    Ok(format!("round {} ready", outcome.round))
                }
            }
        })
    }
}
