//! Bounded worker pool for sampling runs.
//!
//! Jobs wait on a fair semaphore, so they start in submission order, and
//! run on the blocking thread pool. At most `workers` run at once.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;
use tokio::sync::Semaphore;

use crate::error::OpError;
use crate::ops::{PreparedSample, SampleOutput};

pub const DEFAULT_WORKERS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Queued,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone)]
struct Job {
    status: JobStatus,
    error: Option<String>,
    output: Option<Arc<SampleOutput>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct JobView {
    pub id: String,
    pub status: JobStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Latent shape `[channels, height, width]` once done.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shape: Option<[usize; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<Artifacts>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Artifacts {
    pub latent: String,
    pub preview: String,
}

#[derive(Clone)]
pub struct JobQueue {
    jobs: Arc<Mutex<HashMap<String, Job>>>,
    permits: Arc<Semaphore>,
}

impl JobQueue {
    pub fn new(workers: usize) -> Self {
        Self {
            jobs: Arc::default(),
            permits: Arc::new(Semaphore::new(workers.max(1))),
        }
    }

    fn set(&self, id: &str, f: impl FnOnce(&mut Job)) {
        if let Some(job) = self.jobs.lock().unwrap_or_else(|p| p.into_inner()).get_mut(id) {
            f(job);
        }
    }

    /// Queues a prepared run and returns its id. Must be called inside a Tokio runtime.
    pub fn submit(&self, sample: PreparedSample) -> String {
        let id = uuid::Uuid::new_v4().simple().to_string();
        self.jobs.lock().unwrap_or_else(|p| p.into_inner()).insert(
            id.clone(),
            Job {
                status: JobStatus::Queued,
                error: None,
                output: None,
            },
        );
        let queue = self.clone();
        let job_id = id.clone();
        tokio::spawn(async move {
            let Ok(_permit) = queue.permits.clone().acquire_owned().await else {
                return;
            };
            queue.set(&job_id, |j| j.status = JobStatus::Running);
            let result = tokio::task::spawn_blocking(move || sample.run())
                .await
                .unwrap_or_else(|e| Err(OpError::internal(format!("sampling task panicked: {e}"))));
            queue.set(&job_id, |j| match result {
                Ok(out) => {
                    j.status = JobStatus::Done;
                    j.output = Some(Arc::new(out));
                }
                Err(e) => {
                    tracing::warn!(job = %job_id, error = %e, "sampling run failed");
                    j.status = JobStatus::Failed;
                    j.error = Some(e.to_string());
                }
            });
        });
        id
    }

    pub fn view(&self, id: &str) -> Option<JobView> {
        let jobs = self.jobs.lock().unwrap_or_else(|p| p.into_inner());
        let job = jobs.get(id)?;
        let done = job.output.as_ref();
        Some(JobView {
            id: id.to_string(),
            status: job.status,
            error: job.error.clone(),
            shape: done.map(|o| [o.shape.0, o.shape.1, o.shape.2]),
            artifacts: done.map(|_| Artifacts {
                latent: format!("/v1/sample/{id}/latent"),
                preview: format!("/v1/sample/{id}/preview"),
            }),
        })
    }

    /// `None` if the job is unknown; `Some(None)` if it has no output yet.
    pub fn output(&self, id: &str) -> Option<Option<Arc<SampleOutput>>> {
        let jobs = self.jobs.lock().unwrap_or_else(|p| p.into_inner());
        jobs.get(id).map(|j| j.output.clone())
    }
}
