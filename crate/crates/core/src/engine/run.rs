use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::planning::{build_ledger, ExecutionPlan, UserProfile};
use super::record::{
    ActivityEntry, CheckpointEntry, ProvenanceRecord, ResourceUse, RunRecord, TraceEvent, TraceKind,
};
use super::{EngineError, RunFailure};
use crate::dsl::{emit_dsl, parse};
use crate::quantities::{project, Dataset};
use crate::resources::{descriptor_to_xml, parse_descriptor, JobHandle, JobRequest, JobService, JobStatus};
use crate::storage::{ResultKey, RunStatus, Store};
use crate::workflow::NodeKind;

const MANIFEST: &str = "manifest.json";
const RECORD: &str = "record.json";

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Default)]
pub struct ExecOptions {
    /// Stop (as if the engine died) once this many checkpoints were
    /// committed in this session.
    pub stop_after_checkpoints: Option<usize>,
    /// Free-form values stored in the manifest, such as the executor seed.
    pub context: BTreeMap<String, String>,
}

/// What a run was started with; enough to resume it in a new process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: String,
    pub workflow: String,
    pub user: UserProfile,
    pub params: BTreeMap<String, String>,
    pub max_iterations: u32,
    pub bindings: BTreeMap<String, String>,
    /// Resource id to descriptor document.
    pub resources: BTreeMap<String, String>,
    pub context: BTreeMap<String, String>,
}

impl Manifest {
    fn of(run: &str, plan: &ExecutionPlan, context: &BTreeMap<String, String>) -> Manifest {
        Manifest {
            run: run.to_string(),
            workflow: emit_dsl(&plan.graph),
            user: plan.user.clone(),
            params: plan.params.clone(),
            max_iterations: plan.max_iterations,
            bindings: plan.bindings.clone(),
            resources: plan.descriptors.iter().map(|(id, d)| (id.clone(), descriptor_to_xml(d))).collect(),
            context: context.clone(),
        }
    }

    pub fn to_plan(&self) -> Result<ExecutionPlan, EngineError> {
        let graph = parse(&self.workflow)?;
        let mut descriptors = BTreeMap::new();
        for (id, xml) in &self.resources {
            descriptors.insert(id.clone(), Arc::new(parse_descriptor(xml)?));
        }
        for (a, r) in &self.bindings {
            if graph.node(a).is_none() || !descriptors.contains_key(r) {
                return Err(EngineError::Manifest(format!("binding {a} -> {r} does not resolve")));
            }
        }
        let ledger = build_ledger(&graph, &self.bindings, &descriptors);
        Ok(ExecutionPlan {
            graph,
            bindings: self.bindings.clone(),
            descriptors,
            params: self.params.clone(),
            user: self.user.clone(),
            max_iterations: self.max_iterations,
            ledger,
        })
    }
}

pub(crate) fn provenance_of(plan: &ExecutionPlan) -> ProvenanceRecord {
    let parameters = plan.bindings.keys().map(|a| (a.clone(), plan.activity_params(a))).collect();
    let resources = plan
        .bindings
        .iter()
        .map(|(a, r)| {
            let d = &plan.descriptors[r];
            let use_ = ResourceUse {
                resource: d.id.clone(),
                program: d.program.clone(),
                version: d.version.clone(),
                calculator: d.calculator.name.clone(),
                license: d.license.kind,
                descriptor_hash: sha256_hex(descriptor_to_xml(d).as_bytes()),
            };
            (a.clone(), use_)
        })
        .collect();
    ProvenanceRecord {
        workflow: plan.graph.name().to_string(),
        workflow_hash: sha256_hex(emit_dsl(&plan.graph).as_bytes()),
        user: plan.user.to_string(),
        parameters,
        max_iterations: plan.max_iterations,
        resources,
        ledger: plan.ledger.clone(),
    }
}

/// Runs workflows against a job service, exchanging data through a store.
pub struct Engine {
    store: Arc<Store>,
    jobs: Arc<dyn JobService>,
}

#[derive(Debug, Clone, Default)]
struct Token {
    /// Results flowing along this control path, oldest first.
    data: Vec<ResultKey>,
    last_decision: Option<String>,
}

struct Pending {
    activity: String,
    token: Token,
}

struct Session<'a> {
    store: &'a Store,
    jobs: &'a dyn JobService,
    plan: &'a ExecutionPlan,
    run: String,
    record: RunRecord,
    marking: BTreeMap<(String, String), Token>,
    pending: BTreeMap<JobHandle, Pending>,
    occurrences: BTreeMap<String, u32>,
    reuse: BTreeMap<String, Vec<ResultKey>>,
    back_edges: BTreeSet<(String, String)>,
    laps: BTreeMap<(String, String), u32>,
    latest: BTreeMap<String, ResultKey>,
    committed: usize,
    stop_after: Option<usize>,
    order: Vec<String>,
    finished: bool,
}

impl Engine {
    pub fn new(store: Arc<Store>, jobs: Arc<dyn JobService>) -> Self {
        Engine { store, jobs }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Starts a new run. A run that starts but does not complete returns
    /// [`EngineError::RunFailed`]; its record stays readable.
    pub fn execute(&self, plan: &ExecutionPlan, opts: &ExecOptions) -> Result<RunRecord, EngineError> {
        let run = self.store.new_run_id();
        self.store.begin_run(&run)?;
        let manifest = Manifest::of(&run, plan, &opts.context);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| EngineError::Manifest(e.to_string()))?;
        self.store.write_run_file(&run, MANIFEST, text.as_bytes())?;
        let record = RunRecord {
            run: run.clone(),
            status: RunStatus::Active,
            activities: plan
                .bindings
                .iter()
                .map(|(a, r)| (a.clone(), ActivityEntry { resource: r.clone(), ..Default::default() }))
                .collect(),
            trace: Vec::new(),
            checkpoints: Vec::new(),
            failure: None,
            provenance: provenance_of(plan),
            started_at: Some(now_ms()),
            finished_at: None,
        };
        self.drive(plan, record, BTreeMap::new(), opts)
    }

    pub fn manifest(&self, run: &str) -> Result<Manifest, EngineError> {
        let bytes = self.store.read_run_file(run, MANIFEST).map_err(|_| EngineError::UnknownRun(run.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| EngineError::Manifest(e.to_string()))
    }

    pub fn record(&self, run: &str) -> Result<RunRecord, EngineError> {
        let bytes = self.store.read_run_file(run, RECORD).map_err(|_| EngineError::UnknownRun(run.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| EngineError::Manifest(e.to_string()))
    }

    pub fn provenance(&self, run: &str) -> Result<ProvenanceRecord, EngineError> {
        Ok(self.record(run)?.provenance)
    }

    /// Continues a failed, interrupted or rolled-back run. Occurrences with
    /// a committed checkpoint reuse it instead of running again.
    pub fn resume(&self, run: &str, opts: &ExecOptions) -> Result<RunRecord, EngineError> {
        let state = self.store.run_state(run).map_err(|_| EngineError::UnknownRun(run.to_string()))?;
        if state.status == RunStatus::Completed {
            return Err(EngineError::NothingToResume(run.to_string()));
        }
        let manifest = self.manifest(run)?;
        let plan = manifest.to_plan()?;
        let mut record = self.record(run)?;
        let mut reuse: BTreeMap<String, Vec<ResultKey>> = BTreeMap::new();
        for c in &state.checkpoints {
            reuse.entry(c.activity.clone()).or_default().push(c.key.clone());
        }
        record.checkpoints = state
            .checkpoints
            .iter()
            .map(|c| CheckpointEntry { activity: c.activity.clone(), seq: c.key.seq, hash: c.key.hash.clone() })
            .collect();
        record.status = RunStatus::Active;
        record.failure = None;
        record.finished_at = None;
        let seq = record.trace.len() as u64;
        record.trace.push(TraceEvent { seq, node: run.to_string(), kind: TraceKind::Resumed, detail: None });
        self.store.set_status(run, RunStatus::Active)?;
        self.drive(&plan, record, reuse, opts)
    }

    fn drive(
        &self,
        plan: &ExecutionPlan,
        record: RunRecord,
        reuse: BTreeMap<String, Vec<ResultKey>>,
        opts: &ExecOptions,
    ) -> Result<RunRecord, EngineError> {
        let run = record.run.clone();
        let mut s = Session {
            store: &self.store,
            jobs: self.jobs.as_ref(),
            plan,
            run: run.clone(),
            record,
            marking: BTreeMap::new(),
            pending: BTreeMap::new(),
            occurrences: BTreeMap::new(),
            reuse,
            back_edges: plan.graph.back_edges(),
            laps: BTreeMap::new(),
            latest: BTreeMap::new(),
            committed: 0,
            stop_after: opts.stop_after_checkpoints,
            order: plan.graph.topo_order().into_iter().map(str::to_string).collect(),
            finished: false,
        };
        let outcome = s.run_to_end();
        let mut record = s.record;
        record.finished_at = Some(now_ms());
        match outcome {
            Ok(()) => {
                record.status = RunStatus::Completed;
                self.store.set_status(&run, RunStatus::Completed)?;
                self.save(&record)?;
                Ok(record)
            }
            Err(Stop::Failure(failure)) => {
                record.failure = Some(failure.to_string());
                if !matches!(failure, RunFailure::Interrupted(_)) {
                    record.status = RunStatus::Failed;
                    self.store.set_status(&run, RunStatus::Failed)?;
                }
                self.save(&record)?;
                Err(EngineError::RunFailed { run, failure })
            }
            Err(Stop::Error(e)) => {
                record.failure = Some(e.to_string());
                record.status = RunStatus::Failed;
                let _ = self.store.set_status(&run, RunStatus::Failed);
                let _ = self.save(&record);
                Err(e)
            }
        }
    }

    fn save(&self, record: &RunRecord) -> Result<(), EngineError> {
        self.store.write_run_file(&record.run, RECORD, record.to_json().as_bytes())?;
        Ok(())
    }
}

enum Stop {
    Failure(RunFailure),
    Error(EngineError),
}

impl From<EngineError> for Stop {
    fn from(e: EngineError) -> Self {
        Stop::Error(e)
    }
}

impl From<crate::storage::StorageError> for Stop {
    fn from(e: crate::storage::StorageError) -> Self {
        Stop::Error(e.into())
    }
}

fn fail<T>(f: RunFailure) -> Result<T, Stop> {
    Err(Stop::Failure(f))
}

impl Session<'_> {
    fn trace(&mut self, node: &str, kind: TraceKind, detail: Option<String>) {
        let seq = self.record.trace.len() as u64;
        self.record.trace.push(TraceEvent { seq, node: node.to_string(), kind, detail });
    }

    fn place(&mut self, from: &str, to: &str, token: Token) -> Result<(), Stop> {
        let edge = (from.to_string(), to.to_string());
        if self.back_edges.contains(&edge) {
            let laps = self.laps.entry(edge.clone()).or_insert(0);
            *laps += 1;
            if *laps > self.plan.max_iterations {
                let d = token.last_decision.clone().unwrap_or_else(|| to.to_string());
                return fail(RunFailure::IterationLimit(d));
            }
        }
        if self.marking.contains_key(&edge) {
            return fail(RunFailure::UnsafeMarking(format!("{from} -> {to}")));
        }
        self.marking.insert(edge, token);
        Ok(())
    }

    fn take(&mut self, from: &str, to: &str) -> Option<Token> {
        self.marking.remove(&(from.to_string(), to.to_string()))
    }

    fn run_to_end(&mut self) -> Result<(), Stop> {
        let g = &self.plan.graph;
        let start = g.start().to_string();
        let first = g.successors(&start)[0].to_string();
        self.place(&start, &first, Token::default())?;
        loop {
            self.fire_enabled()?;
            if self.finished {
                return Ok(());
            }
            if self.pending.is_empty() {
                let stuck: Vec<String> = self.marking.keys().map(|(a, b)| format!("{a} -> {b}")).collect();
                return fail(RunFailure::Deadlock(stuck.join(", ")));
            }
            let handles: Vec<JobHandle> = self.pending.keys().cloned().collect();
            let (handle, status) = self.jobs.wait_any(&handles).map_err(EngineError::from)?;
            let p = self.pending.remove(&handle).expect("handle was pending");
            self.complete(p, &handle, status)?;
        }
    }

    /// Fires control nodes and starts activities until nothing is enabled.
    fn fire_enabled(&mut self) -> Result<(), Stop> {
        let g = &self.plan.graph;
        loop {
            let mut fired = false;
            for id in self.order.clone() {
                let node = g.node(&id).unwrap();
                let preds: Vec<String> = g.predecessors(&id).into_iter().map(str::to_string).collect();
                let marked: Vec<String> =
                    preds.iter().filter(|p| self.marking.contains_key(&((*p).clone(), id.clone()))).cloned().collect();
                if marked.is_empty() {
                    continue;
                }
                match &node.kind {
                    NodeKind::Start => {}
                    NodeKind::Join => {
                        if marked.len() == preds.len() {
                            let mut token = Token::default();
                            for p in &preds {
                                let t = self.take(p, &id).unwrap();
                                for k in t.data {
                                    if !token.data.contains(&k) {
                                        token.data.push(k);
                                    }
                                }
                                token.last_decision = t.last_decision.or(token.last_decision);
                            }
                            self.trace(&id, TraceKind::Fired, None);
                            let next = g.successors(&id)[0].to_string();
                            self.place(&id, &next, token)?;
                            fired = true;
                        }
                    }
                    NodeKind::Fork => {
                        let token = self.take(&marked[0], &id).unwrap();
                        self.trace(&id, TraceKind::Fired, None);
                        for s in g.successors(&id) {
                            self.place(&id, s, token.clone())?;
                        }
                        fired = true;
                    }
                    NodeKind::Merge => {
                        for p in &marked {
                            let token = self.take(p, &id).unwrap();
                            self.trace(&id, TraceKind::Fired, None);
                            let next = g.successors(&id)[0].to_string();
                            self.place(&id, &next, token)?;
                        }
                        fired = true;
                    }
                    NodeKind::Decision(d) => {
                        let mut token = self.take(&marked[0], &id).unwrap();
                        let ds = self.merged(&token.data, &id)?;
                        let outcome = d.choose(&ds).or_else(|e| {
                            fail(RunFailure::GuardEvaluation { decision: id.clone(), reason: e.to_string() })
                        })?;
                        let target = d.target(outcome).to_string();
                        self.trace(&id, TraceKind::Fired, Some(format!("-> {target}")));
                        token.last_decision = Some(id.clone());
                        self.place(&id, &target, token)?;
                        fired = true;
                    }
                    NodeKind::Final => {
                        self.take(&marked[0], &id);
                        self.trace(&id, TraceKind::Fired, None);
                        if !self.marking.is_empty() || !self.pending.is_empty() {
                            return fail(RunFailure::ResidualTokens(id.clone()));
                        }
                        self.finished = true;
                        return Ok(());
                    }
                    NodeKind::Activity(_) => {
                        let token = self.take(&marked[0], &id).unwrap();
                        self.start_activity(&id, token)?;
                        fired = true;
                    }
                }
            }
            if !fired {
                return Ok(());
            }
        }
    }

    /// Union of the datasets a token carries; later producers win clashes.
    fn merged(&self, keys: &[ResultKey], at: &str) -> Result<Dataset, Stop> {
        let mut out = Dataset::new();
        for k in keys {
            let ds = self.store.get(k)?;
            for obs in ds.observables() {
                if out.upsert(obs.clone()).is_some() {
                    log::warn!("{at}: observable {:?} from {} replaces an earlier value", obs.name(), k.activity);
                }
            }
        }
        Ok(out)
    }

    fn start_activity(&mut self, id: &str, token: Token) -> Result<(), Stop> {
        let occurrence = {
            let o = self.occurrences.entry(id.to_string()).or_insert(0);
            *o += 1;
            *o - 1
        };
        let reused = self.reuse.get(id).and_then(|ks| ks.get(occurrence as usize)).cloned();
        if let Some(key) = reused {
            self.trace(id, TraceKind::Reused, Some(key.to_string()));
            let entry = self.record.activities.entry(id.to_string()).or_default();
            entry.reused += 1;
            entry.result = Some(key.clone());
            self.latest.insert(id.to_string(), key.clone());
            let next = self.plan.graph.successors(id)[0].to_string();
            return self.place(id, &next, Token { data: vec![key], last_decision: token.last_decision });
        }

        let resource = self.plan.bindings[id].clone();
        let mut req = JobRequest::new(&self.run, id, &resource);
        req.params = self.plan.activity_params(id);
        req.occurrence = occurrence;
        let flows: Vec<_> = self.plan.graph.flows_into(id).cloned().collect();
        for f in flows {
            let Some(src) = self.latest.get(&f.producer).cloned() else {
                return fail(RunFailure::ActivityFailed {
                    activity: id.to_string(),
                    reason: format!("no result from {:?} for slot {:?}", f.producer, f.slot),
                });
            };
            let ds = self.store.get(&src)?;
            let staged = project(&ds, &f.spec).or_else(|e| {
                fail(RunFailure::ActivityFailed { activity: id.to_string(), reason: format!("slot {:?}: {e}", f.slot) })
            })?;
            let key = self.store.put(&staged, &self.run, &format!("{id}.in.{}", f.slot))?;
            req.inputs.insert(f.slot.clone(), key);
        }
        let handle = self.jobs.submit(req).map_err(EngineError::from)?;
        let entry = self.record.activities.entry(id.to_string()).or_default();
        entry.executions += 1;
        entry.last_job = Some(handle.job.to_string());
        entry.started_at = Some(now_ms());
        self.trace(id, TraceKind::Submitted, Some(handle.job.to_string()));
        self.pending.insert(handle, Pending { activity: id.to_string(), token });
        Ok(())
    }

    fn complete(&mut self, p: Pending, handle: &JobHandle, status: JobStatus) -> Result<(), Stop> {
        let id = p.activity;
        let reason = match status {
            JobStatus::Succeeded(key) => {
                let ds = self.store.get(&key)?;
                let a = self.plan.graph.node(&id).and_then(|n| n.as_activity()).unwrap();
                if let Some(missing) = a.outputs.iter().find(|o| ds.get(o).is_none()) {
                    format!("result lacks declared output {missing:?}")
                } else {
                    self.store.checkpoint(&self.run, &id, &key)?;
                    self.committed += 1;
                    self.record.checkpoints.push(CheckpointEntry {
                        activity: id.clone(),
                        seq: key.seq,
                        hash: key.hash.clone(),
                    });
                    let entry = self.record.activities.entry(id.clone()).or_default();
                    entry.result = Some(key.clone());
                    entry.finished_at = Some(now_ms());
                    self.trace(&id, TraceKind::Completed, Some(key.to_string()));
                    self.latest.insert(id.clone(), key.clone());
                    self.store.write_run_file(&self.run, RECORD, self.record.to_json().as_bytes())?;
                    if self.stop_after.is_some_and(|n| self.committed >= n) {
                        return fail(RunFailure::Interrupted(self.committed));
                    }
                    let next = self.plan.graph.successors(&id)[0].to_string();
                    return self.place(&id, &next, Token { data: vec![key], last_decision: p.token.last_decision });
                }
            }
            JobStatus::Failed(reason) => reason,
            JobStatus::Withdrawn => format!("resource {} was withdrawn", handle.resource),
            other => format!("job ended in state {}", other.label()),
        };
        self.trace(&id, TraceKind::Failed, Some(reason.clone()));
        fail(RunFailure::ActivityFailed { activity: id, reason })
    }
}
