use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobKind {
    Embed,
    Refresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Running,
    Done,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Done | JobState::Failed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: u64,
    pub kind: JobKind,
    pub state: JobState,
    /// Fraction of work done, in `[0, 1]`.
    pub progress: f64,
    pub message: Option<String>,
}

impl JobStatus {
    pub fn new(job_id: u64, kind: JobKind) -> Self {
        JobStatus {
            job_id,
            kind,
            state: JobState::Queued,
            progress: 0.0,
            message: None,
        }
    }

    /// Moves to `to` if that is a forward step. Terminal states are final.
    pub fn transition(&mut self, to: JobState) -> bool {
        if self.state.is_terminal() || to <= self.state {
            return false;
        }
        self.state = to;
        if to == JobState::Done {
            self.progress = 1.0;
        }
        true
    }

    pub fn set_progress(&mut self, fraction: f64) {
        if !self.state.is_terminal() {
            self.progress = self.progress.max(fraction.clamp(0.0, 1.0));
        }
    }
}

#[derive(Debug, Default)]
pub(crate) struct JobTable {
    next_id: u64,
    jobs: BTreeMap<u64, JobStatus>,
    pub(crate) active: Option<u64>,
}

impl JobTable {
    pub(crate) fn create(&mut self, kind: JobKind) -> JobStatus {
        self.next_id += 1;
        let job = JobStatus::new(self.next_id, kind);
        self.jobs.insert(job.job_id, job.clone());
        self.active = Some(job.job_id);
        job
    }

    pub(crate) fn get(&self, id: u64) -> Option<&JobStatus> {
        self.jobs.get(&id)
    }

    pub(crate) fn get_mut(&mut self, id: u64) -> Option<&mut JobStatus> {
        self.jobs.get_mut(&id)
    }

    pub(crate) fn active(&self) -> Option<&JobStatus> {
        self.active.and_then(|id| self.jobs.get(&id))
    }

    pub(crate) fn finish(&mut self, id: u64, state: JobState, message: Option<String>) {
        if let Some(job) = self.jobs.get_mut(&id) {
            job.transition(state);
            job.message = message;
        }
        if self.active == Some(id) {
            self.active = None;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transitions_only_forward() {
        let mut job = JobStatus::new(1, JobKind::Embed);
        assert!(!job.transition(JobState::Queued));
        assert!(job.transition(JobState::Running));
        assert!(!job.transition(JobState::Queued));
        assert!(job.transition(JobState::Failed));
        assert!(!job.transition(JobState::Done));
        assert_eq!(job.state, JobState::Failed);
    }

    #[test]
    fn queued_can_finish_directly() {
        let mut job = JobStatus::new(1, JobKind::Refresh);
        assert!(job.transition(JobState::Done));
        assert_eq!(job.progress, 1.0);
    }

    #[test]
    fn progress_is_monotone_and_clamped() {
        let mut job = JobStatus::new(1, JobKind::Embed);
        job.set_progress(0.4);
        job.set_progress(0.2);
        assert_eq!(job.progress, 0.4);
        job.set_progress(7.0);
        assert_eq!(job.progress, 1.0);
    }

    #[test]
    fn table_tracks_single_active_job() {
        let mut table = JobTable::default();
        let a = table.create(JobKind::Embed);
        assert_eq!(table.active().unwrap().job_id, a.job_id);
        table.finish(a.job_id, JobState::Done, None);
        assert!(table.active().is_none());
        let b = table.create(JobKind::Refresh);
        assert_ne!(a.job_id, b.job_id);
        assert_eq!(table.get(a.job_id).unwrap().state, JobState::Done);
    }
}
