mod support;

use std::collections::BTreeMap;
use std::sync::Arc;

use gridflow::dsl::parse;
use gridflow::engine::{plan, Affiliation, Engine, ExecOptions, TraceKind, UserProfile};
use gridflow::quantities::{Dataset, Observable};
use gridflow::resources::{JobBroker, JobHandle, JobId, JobRequest, JobService, JobStatus, LicenseKind, Registry, ResourceError};
use gridflow::simgrid::SimulatedExecutor;
use gridflow::storage::{Store, StorageService, STORAGE_RESOURCE};
use support::descriptor;

fn store() -> (tempfile::TempDir, Arc<Store>) {
    let dir = tempfile::tempdir().unwrap();
    let s = Arc::new(Store::open(dir.path()).unwrap());
    (dir, s)
}

fn broker(store: &Arc<Store>, seed: u64, max_jobs: u32) -> JobBroker {
    let r = Registry::new();
    r.register(descriptor("echo@a", &["gen"], LicenseKind::Open, max_jobs)).unwrap();
    r.register(descriptor("echo@b", &["gen"], LicenseKind::Open, max_jobs)).unwrap();
    JobBroker::new(Arc::new(r), Box::new(SimulatedExecutor::new(store.clone(), seed)))
}

/// Polls to a terminal state, checking every observed change is a legal
/// transition.
fn poll_to_end(svc: &dyn JobService, h: &JobHandle) -> JobStatus {
    let mut last = JobStatus::Queued;
    for _ in 0..1000 {
        let s = svc.poll(h).unwrap();
        if s != last {
            assert!(last.can_become(&s), "{} -> {}", last.label(), s.label());
            last = s;
        }
        if last.is_terminal() {
            return last;
        }
    }
    panic!("job {} never finished", h.job);
}

fn contract(svc: &dyn JobService, store: &Store, resource: &str) {
    let input = Dataset::new().with(Observable::scalar("x", 2.0, "nm").unwrap()).unwrap();
    let key = store.put(&input, "r1", "seed").unwrap();
    let mut req = JobRequest::new("r1", "copy", resource);
    req.inputs.insert("in".into(), key);
    let h = svc.submit(req).unwrap();
    let JobStatus::Succeeded(out) = poll_to_end(svc, &h) else { panic!("job failed") };
    assert_eq!(store.get(&out).unwrap().require("x").unwrap().as_scalar(), Some(2.0));
    assert_eq!(svc.poll(&h).unwrap(), JobStatus::Succeeded(out));

    let ghost = JobHandle { job: JobId("nope".into()), resource: resource.into() };
    assert!(matches!(svc.poll(&ghost), Err(ResourceError::UnknownJob(_))));
    assert!(matches!(svc.submit(JobRequest::new("r1", "x", "missing@nowhere")), Err(ResourceError::UnknownResource(_))));
}

#[test]
fn broker_honours_the_service_contract() {
    let (_d, s) = store();
    let b = broker(&s, 1, 1);
    contract(&b, &s, "echo@a");
}

#[test]
fn storage_service_honours_the_service_contract() {
    let (_d, s) = store();
    let svc = StorageService::new(s.clone());
    contract(&svc, &s, STORAGE_RESOURCE);
}

#[test]
fn single_slot_resource_runs_one_job_at_a_time() {
    let (_d, s) = store();
    let b = broker(&s, 9, 1);
    let hs: Vec<JobHandle> = (0..3).map(|i| b.submit(JobRequest::new("r", &format!("j{i}"), "echo@a")).unwrap()).collect();
    for h in &hs {
        assert!(matches!(poll_to_end(&b, h), JobStatus::Succeeded(_)));
    }
    let mut running = 0i32;
    for ev in b.status_log() {
        match ev.status {
            JobStatus::Running => running += 1,
            ref s if s.is_terminal() => running -= 1,
            _ => {}
        }
        assert!(running <= 1, "two jobs running at tick {}", ev.tick);
    }
    let usage = b.usage("echo@a").unwrap();
    assert_eq!((usage.started, usage.succeeded), (3, 3));
    assert_eq!(usage.busy_ticks, 3);
}

#[test]
fn withdraw_ends_running_jobs() {
    let (_d, s) = store();
    let b = broker(&s, 2, 1);
    let h1 = b.submit(JobRequest::new("r", "a", "echo@a")).unwrap();
    let h2 = b.submit(JobRequest::new("r", "b", "echo@a")).unwrap();
    assert_eq!(b.poll(&h1).unwrap(), JobStatus::Running);
    b.withdraw("echo@a").unwrap();
    assert_eq!(poll_to_end(&b, &h1), JobStatus::Withdrawn);
    assert_eq!(poll_to_end(&b, &h2), JobStatus::Withdrawn);
    assert_eq!(b.history(&h1.job).unwrap(), vec![JobStatus::Queued, JobStatus::Running, JobStatus::Withdrawn]);
    assert!(matches!(b.submit(JobRequest::new("r", "c", "echo@a")), Err(ResourceError::ResourceWithdrawn(_))));
    b.drain();
    assert_eq!(b.usage("echo@a").unwrap().withdrawn, 2);
}

const FORK: &str = r#"workflow "fork" {
  activity A { program: "echo"; actuator: "echo@a" }
  activity B { program: "echo"; actuator: "echo@b" }
  fork F after start into (A, B);
  join J waits (A, B) -> end;
}"#;

#[test]
fn fork_schedules_cover_both_orders_and_join_last() {
    let g = parse(FORK).unwrap();
    let mut orders = std::collections::BTreeSet::new();
    for seed in 0..50 {
        let (_d, s) = store();
        let b = broker(&s, seed, 1);
        let jobs: Arc<dyn JobService> = Arc::new(b);
        let registry = {
            let r = Registry::new();
            r.register(descriptor("echo@a", &["gen"], LicenseKind::Open, 1)).unwrap();
            r.register(descriptor("echo@b", &["gen"], LicenseKind::Open, 1)).unwrap();
            r
        };
        let p = plan(&g, &registry, &UserProfile::new("u", Affiliation::Academic), BTreeMap::new(), 100).unwrap();
        let rec = Engine::new(s, jobs).execute(&p, &ExecOptions::default()).unwrap();
        let done = rec.completed_activities();
        orders.insert(done.join(","));
        let pos = |node: &str, kind: TraceKind| rec.trace.iter().position(|e| e.node == node && e.kind == kind).unwrap();
        let join = pos("J", TraceKind::Fired);
        assert!(join > pos("A", TraceKind::Completed) && join > pos("B", TraceKind::Completed), "seed {seed}");
        assert!(pos("F", TraceKind::Fired) < pos("A", TraceKind::Submitted));
        assert!(pos("F", TraceKind::Fired) < pos("B", TraceKind::Submitted));
        let last_activity_event = rec.trace.iter().rposition(|e| e.node == "A" || e.node == "B").unwrap();
        assert!(join > last_activity_event);
    }
    assert_eq!(orders.into_iter().collect::<Vec<_>>(), vec!["A,B".to_string(), "B,A".to_string()]);
}
