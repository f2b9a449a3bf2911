use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::mocks::{app_for, Echo, MockApp, MOCK_PROGRAMS};
use crate::resources::{Executor, JobId, JobStatus, JobTicket, StatusEvent};
use crate::storage::Store;

struct Running {
    finish: u64,
    ticket: JobTicket,
}

/// Runs jobs on a virtual clock. Each resource runs up to its calculator's
/// `max_jobs` at once; a job finishes a fixed number of ticks after it
/// starts, and simultaneous finishes are ordered by the seeded generator.
pub struct SimulatedExecutor {
    store: Arc<Store>,
    seed: u64,
    rng: ChaCha8Rng,
    clock: u64,
    queues: BTreeMap<String, VecDeque<JobTicket>>,
    running: Vec<Running>,
    outbox: VecDeque<StatusEvent>,
    faults: BTreeSet<(String, u32)>,
    latency: BTreeMap<String, u64>,
    default_latency: u64,
    apps: BTreeMap<String, Box<dyn MockApp>>,
}

impl SimulatedExecutor {
    /// An executor with every mock application installed. Programs without
    /// a mock run as [`Echo`].
    pub fn new(store: Arc<Store>, seed: u64) -> Self {
        let apps = MOCK_PROGRAMS.iter().map(|p| (p.to_string(), app_for(p).expect("known mock"))).collect();
        SimulatedExecutor {
            store,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            clock: 0,
            queues: BTreeMap::new(),
            running: Vec::new(),
            outbox: VecDeque::new(),
            faults: BTreeSet::new(),
            latency: BTreeMap::new(),
            default_latency: 1,
            apps,
        }
    }

    /// Fails the `occurrence`-th (1-based) execution of `activity`, once.
    pub fn fail_at(mut self, activity: &str, occurrence: u32) -> Self {
        self.faults.insert((activity.to_string(), occurrence));
        self
    }

    pub fn with_latency(mut self, resource: &str, ticks: u64) -> Self {
        self.latency.insert(resource.to_string(), ticks.max(1));
        self
    }

    pub fn with_app(mut self, app: Box<dyn MockApp>) -> Self {
        self.apps.insert(app.program().to_string(), app);
        self
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The seed handed to an activity that was not given one explicitly.
    pub fn derived_seed(&self, activity: &str, occurrence: u32) -> u64 {
        let digest = Sha256::digest(format!("{}/{activity}/{occurrence}", self.seed).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    fn start_ready(&mut self) {
        let resources: Vec<String> = self.queues.keys().cloned().collect();
        for r in resources {
            loop {
                let busy = self.running.iter().filter(|j| j.ticket.request.resource == r).count();
                let queue = self.queues.get_mut(&r).expect("queue exists");
                let Some(front) = queue.front() else { break };
                if busy >= front.descriptor.calculator.max_jobs.max(1) as usize {
                    break;
                }
                let ticket = queue.pop_front().expect("nonempty");
                let ticks = self.latency.get(&r).copied().unwrap_or(self.default_latency);
                self.outbox.push_back(StatusEvent {
                    job: ticket.job.clone(),
                    resource: r.clone(),
                    status: JobStatus::Running,
                    tick: self.clock,
                });
                self.running.push(Running { finish: self.clock + ticks, ticket });
            }
        }
    }

    fn execute(&mut self, ticket: &JobTicket) -> JobStatus {
        let req = &ticket.request;
        let nth = req.occurrence + 1;
        if self.faults.remove(&(req.activity.clone(), nth)) {
            return JobStatus::Failed(format!("injected fault at {}:{nth}", req.activity));
        }
        let mut inputs = BTreeMap::new();
        for (slot, key) in &req.inputs {
            match self.store.get(key) {
                Ok(ds) => {
                    inputs.insert(slot.clone(), ds);
                }
                Err(e) => return JobStatus::Failed(format!("staging {slot}: {e}")),
            }
        }
        let mut params = req.params.clone();
        params
            .entry("seed".to_string())
            .or_insert_with(|| self.derived_seed(&req.activity, req.occurrence).to_string());
        let app: &dyn MockApp = self.apps.get(&ticket.descriptor.program).map_or(&Echo, |a| a.as_ref());
        let result = app.run(&inputs, &params).and_then(|native| app.adapt(&native));
        match result {
            Ok(ds) => match self.store.put(&ds, &req.run, &req.activity) {
                Ok(key) => JobStatus::Succeeded(key),
                Err(e) => JobStatus::Failed(e.to_string()),
            },
            Err(e) => JobStatus::Failed(format!("{}: {e}", ticket.descriptor.program)),
        }
    }
}

impl Executor for SimulatedExecutor {
    fn enqueue(&mut self, ticket: JobTicket) {
        self.queues.entry(ticket.request.resource.clone()).or_default().push_back(ticket);
    }

    fn step(&mut self) -> Option<StatusEvent> {
        if let Some(ev) = self.outbox.pop_front() {
            return Some(ev);
        }
        self.start_ready();
        if let Some(ev) = self.outbox.pop_front() {
            return Some(ev);
        }
        let next = self.running.iter().map(|j| j.finish).min()?;
        let mut due: Vec<usize> = (0..self.running.len()).filter(|&i| self.running[i].finish == next).collect();
        due.sort_by(|&a, &b| self.running[a].ticket.job.cmp(&self.running[b].ticket.job));
        let pick = due[self.rng.gen_range(0..due.len())];
        let job = self.running.remove(pick);
        self.clock = next;
        let status = self.execute(&job.ticket);
        Some(StatusEvent {
            job: job.ticket.job.clone(),
            resource: job.ticket.request.resource.clone(),
            status,
            tick: self.clock,
        })
    }

    fn cancel(&mut self, job: &JobId) -> bool {
        for q in self.queues.values_mut() {
            if let Some(i) = q.iter().position(|t| &t.job == job) {
                q.remove(i);
                return true;
            }
        }
        if let Some(i) = self.running.iter().position(|r| &r.ticket.job == job) {
            self.running.remove(i);
            return true;
        }
        false
    }

    fn now(&self) -> u64 {
        self.clock
    }
}
