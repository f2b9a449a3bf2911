use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use crate::quantities::Dataset;
use crate::resources::{JobHandle, JobId, JobRequest, JobService, JobStatus, ResourceError};

use super::Store;

/// The store exposed through the same submit/poll interface as compute
/// services.
///
/// A job merges its input datasets (slots in name order; later slots win
/// name clashes) and stores the union as the result of
/// (`run`, `activity`). Jobs complete on the first poll after submission.
pub struct StorageService {
    store: Arc<Store>,
    jobs: Mutex<BTreeMap<JobId, Job>>,
}

struct Job {
    request: JobRequest,
    status: JobStatus,
}

pub const STORAGE_RESOURCE: &str = "storage";

impl StorageService {
    pub fn new(store: Arc<Store>) -> Self {
        StorageService { store, jobs: Mutex::new(BTreeMap::new()) }
    }

    fn run_job(&self, req: &JobRequest) -> JobStatus {
        let mut merged = Dataset::new();
        for key in req.inputs.values() {
            match self.store.get(key) {
                Ok(ds) => {
                    for obs in ds.observables() {
                        merged.upsert(obs.clone());
                    }
                }
                Err(e) => return JobStatus::Failed(e.to_string()),
            }
        }
        match self.store.put(&merged, &req.run, &req.activity) {
            Ok(key) => JobStatus::Succeeded(key),
            Err(e) => JobStatus::Failed(e.to_string()),
        }
    }
}

impl JobService for StorageService {
    fn submit(&self, req: JobRequest) -> Result<JobHandle, ResourceError> {
        if req.resource != STORAGE_RESOURCE {
            return Err(ResourceError::UnknownResource(req.resource));
        }
        let mut jobs = self.jobs.lock().unwrap_or_else(|p| p.into_inner());
        let job = JobId(format!("store-{:06}", jobs.len() + 1));
        jobs.insert(job.clone(), Job { request: req, status: JobStatus::Queued });
        Ok(JobHandle { job, resource: STORAGE_RESOURCE.to_string() })
    }

    fn poll(&self, handle: &JobHandle) -> Result<JobStatus, ResourceError> {
        let mut jobs = self.jobs.lock().unwrap_or_else(|p| p.into_inner());
        let job = jobs
            .get_mut(&handle.job)
            .ok_or_else(|| ResourceError::UnknownJob(handle.job.to_string()))?;
        job.status = match &job.status {
            JobStatus::Queued => JobStatus::Running,
            JobStatus::Running => self.run_job(&job.request),
            done => done.clone(),
        };
        Ok(job.status.clone())
    }
}
