use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{render_launch, LaunchPlan, Registry, ResourceDescriptor, ResourceError};
use crate::storage::ResultKey;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRequest {
    pub run: String,
    pub activity: String,
    pub resource: String,
    /// Input slot name to the staged dataset for that slot.
    pub inputs: BTreeMap<String, ResultKey>,
    pub params: BTreeMap<String, String>,
    /// How many times this activity already ran in the run.
    #[serde(default)]
    pub occurrence: u32,
}

impl JobRequest {
    pub fn new(run: &str, activity: &str, resource: &str) -> Self {
        JobRequest {
            run: run.to_string(),
            activity: activity.to_string(),
            resource: resource.to_string(),
            inputs: BTreeMap::new(),
            params: BTreeMap::new(),
            occurrence: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobId(pub String);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JobHandle {
    pub job: JobId,
    pub resource: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "state", content = "detail")]
pub enum JobStatus {
    Queued,
    Running,
    Succeeded(ResultKey),
    Failed(String),
    Withdrawn,
}

impl JobStatus {
    pub fn is_terminal(&self) -> bool {
        matches!(self, JobStatus::Succeeded(_) | JobStatus::Failed(_) | JobStatus::Withdrawn)
    }

    /// queued -> running -> {succeeded | failed}, or any live state -> withdrawn.
    pub fn can_become(&self, next: &JobStatus) -> bool {
        match (self, next) {
            (JobStatus::Queued, JobStatus::Running) => true,
            (JobStatus::Running, JobStatus::Succeeded(_) | JobStatus::Failed(_)) => true,
            (s, JobStatus::Withdrawn) => !s.is_terminal(),
            _ => false,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            JobStatus::Queued => "queued",
            JobStatus::Running => "running",
            JobStatus::Succeeded(_) => "succeeded",
            JobStatus::Failed(_) => "failed",
            JobStatus::Withdrawn => "withdrawn",
        }
    }
}

/// Everything an executor needs to run one job.
#[derive(Debug, Clone)]
pub struct JobTicket {
    pub job: JobId,
    pub descriptor: Arc<ResourceDescriptor>,
    pub request: JobRequest,
    pub launch: LaunchPlan,
}

/// A status change reported by an executor, stamped with its virtual time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusEvent {
    pub job: JobId,
    pub resource: String,
    pub status: JobStatus,
    pub tick: u64,
}

/// The fabric-layer side: something that actually runs rendered jobs.
pub trait Executor: Send {
    fn enqueue(&mut self, ticket: JobTicket);
    /// Advances to the next status change; `None` when there is no work.
    fn step(&mut self) -> Option<StatusEvent>;
    /// Stops a queued or running job. Returns false if it was unknown.
    fn cancel(&mut self, job: &JobId) -> bool;
    fn now(&self) -> u64;
}

/// The uniform submit/poll service shape shared by compute services and
/// the storage mediator.
pub trait JobService: Send + Sync {
    fn submit(&self, req: JobRequest) -> Result<JobHandle, ResourceError>;

    /// Reports the job's status, letting the backend make at most one step
    /// of progress first.
    fn poll(&self, handle: &JobHandle) -> Result<JobStatus, ResourceError>;

    /// Blocks until one of `handles` is terminal and returns it.
    fn wait_any(&self, handles: &[JobHandle]) -> Result<(JobHandle, JobStatus), ResourceError> {
        if handles.is_empty() {
            return Err(ResourceError::Stalled("wait_any on no handles".into()));
        }
        // Bounded so a backend that never progresses cannot spin forever.
        for _ in 0..1_000_000 {
            for h in handles {
                let status = self.poll(h)?;
                if status.is_terminal() {
                    return Ok((h.clone(), status));
                }
            }
        }
        Err(ResourceError::Stalled("no handle reached a terminal state".into()))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub resource: String,
    pub started: u64,
    pub succeeded: u64,
    pub failed: u64,
    pub withdrawn: u64,
    /// Virtual ticks spent in the running state.
    pub busy_ticks: u64,
}

struct JobEntry {
    handle: JobHandle,
    status: JobStatus,
    history: Vec<JobStatus>,
    running_since: Option<u64>,
    /// Position of the terminal event in the broker log.
    terminal_at: Option<usize>,
}

struct BrokerState {
    executor: Box<dyn Executor>,
    jobs: BTreeMap<JobId, JobEntry>,
    log: Vec<StatusEvent>,
    usage: BTreeMap<String, UsageRecord>,
    next_id: u64,
}

/// Compute service over a registry and an executor.
pub struct JobBroker {
    registry: Arc<Registry>,
    workroot: String,
    state: Mutex<BrokerState>,
}

impl JobBroker {
    pub fn new(registry: Arc<Registry>, executor: Box<dyn Executor>) -> Self {
        JobBroker {
            registry,
            workroot: "/work".to_string(),
            state: Mutex::new(BrokerState {
                executor,
                jobs: BTreeMap::new(),
                log: Vec::new(),
                usage: BTreeMap::new(),
                next_id: 1,
            }),
        }
    }

    pub fn with_workroot(mut self, root: impl Into<String>) -> Self {
        self.workroot = root.into();
        self
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BrokerState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Marks the resource unavailable and withdraws its live jobs.
    pub fn withdraw(&self, resource: &str) -> Result<(), ResourceError> {
        self.registry.mark_withdrawn(resource)?;
        let mut st = self.lock();
        let live: Vec<JobId> = st
            .jobs
            .iter()
            .filter(|(_, e)| e.handle.resource == resource && !e.status.is_terminal())
            .map(|(id, _)| id.clone())
            .collect();
        for job in live {
            st.executor.cancel(&job);
            let tick = st.executor.now();
            st.apply(StatusEvent {
                job,
                resource: resource.to_string(),
                status: JobStatus::Withdrawn,
                tick,
            });
        }
        Ok(())
    }

    /// Every status change observed so far, in order.
    pub fn status_log(&self) -> Vec<StatusEvent> {
        self.lock().log.clone()
    }

    pub fn history(&self, job: &JobId) -> Option<Vec<JobStatus>> {
        self.lock().jobs.get(job).map(|e| e.history.clone())
    }

    pub fn usage(&self, resource: &str) -> Option<UsageRecord> {
        self.lock().usage.get(resource).cloned()
    }

    pub fn usage_all(&self) -> Vec<UsageRecord> {
        self.lock().usage.values().cloned().collect()
    }

    /// Runs the executor until it has nothing left to do.
    pub fn drain(&self) {
        let mut st = self.lock();
        while st.pump() {}
    }

    pub fn now(&self) -> u64 {
        self.lock().executor.now()
    }
}

impl BrokerState {
    fn apply(&mut self, ev: StatusEvent) {
        let Some(entry) = self.jobs.get_mut(&ev.job) else {
            log::warn!("executor reported unknown job {}", ev.job);
            return;
        };
        if !entry.status.can_become(&ev.status) {
            // Late reports for withdrawn jobs land here.
            log::debug!("ignoring {} -> {} for {}", entry.status.label(), ev.status.label(), ev.job);
            return;
        }
        let usage = self.usage.entry(ev.resource.clone()).or_default();
        match &ev.status {
            JobStatus::Running => entry.running_since = Some(ev.tick),
            JobStatus::Succeeded(_) => usage.succeeded += 1,
            JobStatus::Failed(_) => usage.failed += 1,
            JobStatus::Withdrawn => usage.withdrawn += 1,
            JobStatus::Queued => {}
        }
        if ev.status.is_terminal() {
            if let Some(since) = entry.running_since.take() {
                usage.busy_ticks += ev.tick.saturating_sub(since);
            }
            entry.terminal_at = Some(self.log.len());
        }
        entry.status = ev.status.clone();
        entry.history.push(ev.status.clone());
        self.log.push(ev);
    }

    fn pump(&mut self) -> bool {
        match self.executor.step() {
            Some(ev) => {
                self.apply(ev);
                true
            }
            None => false,
        }
    }
}

impl JobService for JobBroker {
    fn submit(&self, req: JobRequest) -> Result<JobHandle, ResourceError> {
        let descriptor = self
            .registry
            .get(&req.resource)
            .ok_or_else(|| ResourceError::UnknownResource(req.resource.clone()))?;
        if self.registry.is_withdrawn(&req.resource) == Some(true) {
            return Err(ResourceError::ResourceWithdrawn(req.resource.clone()));
        }
        let mut st = self.lock();
        let job = JobId(format!("job-{:06}", st.next_id));
        let workdir = format!("{}/{}/{}", self.workroot.trim_end_matches('/'), req.run, job);
        let launch = render_launch(&descriptor.template, &req, &workdir)?;
        st.next_id += 1;
        let handle = JobHandle { job: job.clone(), resource: req.resource.clone() };
        st.jobs.insert(
            job.clone(),
            JobEntry {
                handle: handle.clone(),
                status: JobStatus::Queued,
                history: vec![JobStatus::Queued],
                running_since: None,
                terminal_at: None,
            },
        );
        let tick = st.executor.now();
        let usage = st.usage.entry(req.resource.clone()).or_default();
        usage.resource = req.resource.clone();
        usage.started += 1;
        st.log.push(StatusEvent {
            job: job.clone(),
            resource: req.resource.clone(),
            status: JobStatus::Queued,
            tick,
        });
        st.executor.enqueue(JobTicket { job, descriptor, request: req, launch });
        Ok(handle)
    }

    fn poll(&self, handle: &JobHandle) -> Result<JobStatus, ResourceError> {
        let mut st = self.lock();
        if !st.jobs.contains_key(&handle.job) {
            return Err(ResourceError::UnknownJob(handle.job.to_string()));
        }
        if !st.jobs[&handle.job].status.is_terminal() {
            st.pump();
        }
        Ok(st.jobs[&handle.job].status.clone())
    }

    /// Returns whichever of `handles` reached a terminal state first in
    /// executor order.
    fn wait_any(&self, handles: &[JobHandle]) -> Result<(JobHandle, JobStatus), ResourceError> {
        let mut st = self.lock();
        for h in handles {
            if !st.jobs.contains_key(&h.job) {
                return Err(ResourceError::UnknownJob(h.job.to_string()));
            }
        }
        loop {
            let first = handles
                .iter()
                .filter_map(|h| st.jobs[&h.job].terminal_at.map(|at| (at, h)))
                .min_by_key(|(at, _)| *at);
            if let Some((_, h)) = first {
                return Ok((h.clone(), st.jobs[&h.job].status.clone()));
            }
            if !st.pump() {
                return Err(ResourceError::Stalled(format!(
                    "executor idle while waiting on {} job(s)",
                    handles.len()
                )));
            }
        }
    }
}
