//! Shared test helpers: corpus loading, a brute-force token simulator,
//! an independent precedence oracle and a scripted job service.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashSet, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use gridflow::quantities::{Dataset, Observable};
use gridflow::resources::{
    Calculator, JobHandle, JobId, JobRequest, JobService, JobStatus, LaunchTemplate, License, LicenseKind, Registry,
    ResourceDescriptor, ResourceError,
};
use gridflow::storage::Store;
use gridflow::workflow::{NodeKind, WorkflowGraph};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub struct CorpusFile {
    pub name: String,
    pub text: String,
    /// Finding kind named by a leading `// expect: Kind` line.
    pub expect: Option<String>,
}

pub fn corpus(kind: &str) -> Vec<CorpusFile> {
    let dir = workspace_root().join("workflows/corpus").join(kind);
    let mut out: Vec<CorpusFile> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "dsl"))
        .map(|p| {
            let text = std::fs::read_to_string(&p).unwrap();
            let expect = text
                .lines()
                .next()
                .and_then(|l| l.strip_prefix("// expect:"))
                .map(|k| k.trim().to_string());
            CorpusFile { name: p.file_stem().unwrap().to_string_lossy().into_owned(), text, expect }
        })
        .collect();
    out.sort_by(|a, b| a.name.cmp(&b.name));
    out
}

/// Outcome of exhaustively playing the token game.
#[derive(Debug, Default)]
pub struct OracleVerdict {
    pub states: usize,
    pub unsafe_edge: bool,
    pub improper_completion: bool,
    pub unbound_flow: bool,
    pub dead_nodes: Vec<String>,
    pub cannot_complete: bool,
}

impl OracleVerdict {
    pub fn sound(&self) -> bool {
        !self.unsafe_edge && !self.improper_completion && !self.unbound_flow && self.dead_nodes.is_empty() && !self.cannot_complete
    }
}

/// Explores every interleaving and decision outcome. A state is the token
/// count per edge plus the set of activities fired so far. An object flow
/// is bound when some execution fires its consumer after its producer.
pub fn token_oracle(g: &WorkflowGraph) -> OracleVerdict {
    let ids: Vec<&str> = g.nodes().map(|n| n.id.as_str()).collect();
    let pos = |id: &str| ids.iter().position(|&x| x == id).unwrap();
    let edges: Vec<(usize, usize)> = g.edges().map(|(a, b)| (pos(a), pos(b))).collect();
    let ins: Vec<Vec<usize>> = (0..ids.len()).map(|n| (0..edges.len()).filter(|&e| edges[e].1 == n).collect()).collect();
    let outs: Vec<Vec<usize>> = (0..ids.len()).map(|n| (0..edges.len()).filter(|&e| edges[e].0 == n).collect()).collect();
    let producers: Vec<Vec<usize>> = (0..ids.len())
        .map(|n| g.object_flows().iter().filter(|f| f.consumer == ids[n]).map(|f| pos(&f.producer)).collect())
        .collect();

    type State = (Vec<u8>, u64);
    let mut v = OracleVerdict::default();
    let start = pos(g.start());
    let mut init = vec![0u8; edges.len()];
    for &e in &outs[start] {
        init[e] += 1;
    }
    let mut fired_any: u64 = 1 << start;
    let mut witnessed: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut seen: HashSet<State> = HashSet::new();
    let mut graph: Vec<(State, Vec<State>)> = Vec::new();
    let mut queue = VecDeque::from([(init, 0u64)]);
    while let Some(state) = queue.pop_front() {
        if !seen.insert(state.clone()) {
            continue;
        }
        let (m, fired) = &state;
        let mut next = Vec::new();
        for n in 0..ids.len() {
            let kind = &g.node(ids[n]).unwrap().kind;
            let consumable: Vec<Vec<usize>> = match kind {
                NodeKind::Start => vec![],
                NodeKind::Join => {
                    if ins[n].iter().all(|&e| m[e] > 0) {
                        vec![ins[n].clone()]
                    } else {
                        vec![]
                    }
                }
                _ => ins[n].iter().filter(|&&e| m[e] > 0).map(|&e| vec![e]).collect(),
            };
            for consume in consumable {
                let produce: Vec<Vec<usize>> = match kind {
                    NodeKind::Decision(_) => outs[n].iter().map(|&e| vec![e]).collect(),
                    _ => vec![outs[n].clone()],
                };
                for p in produce {
                    let mut m2 = m.clone();
                    for &e in &consume {
                        m2[e] -= 1;
                    }
                    for &e in &p {
                        m2[e] += 1;
                    }
                    fired_any |= 1 << n;
                    if matches!(kind, NodeKind::Activity(_)) {
                        for &q in producers[n].iter().filter(|&&q| fired & (1 << q) != 0) {
                            witnessed.insert((q, n));
                        }
                    }
                    if matches!(kind, NodeKind::Final) && m2.iter().any(|&c| c > 0) {
                        v.improper_completion = true;
                    }
                    if m2.iter().any(|&c| c > 1) {
                        v.unsafe_edge = true;
                        continue;
                    }
                    let f2 = if matches!(kind, NodeKind::Activity(_)) { fired | (1 << n) } else { *fired };
                    let s2 = (m2, f2);
                    next.push(s2.clone());
                    queue.push_back(s2);
                }
            }
        }
        graph.push((state, next));
    }
    v.states = graph.len();
    v.unbound_flow = g.object_flows().iter().any(|f| !witnessed.contains(&(pos(&f.producer), pos(&f.consumer))));
    v.dead_nodes = (0..ids.len()).filter(|&n| fired_any & (1 << n) == 0).map(|n| ids[n].to_string()).collect();

    // Backward closure from empty markings.
    let mut done: HashSet<&State> = graph.iter().filter(|(s, _)| s.0.iter().all(|&c| c == 0)).map(|(s, _)| s).collect();
    loop {
        let before = done.len();
        for (s, ns) in &graph {
            if !done.contains(s) && ns.iter().any(|x| done.contains(x)) {
                done.insert(s);
            }
        }
        if done.len() == before {
            break;
        }
    }
    v.cannot_complete = graph.iter().any(|(s, _)| !done.contains(s));
    v
}

/// Direct activity dependencies, computed from scratch: back edges found
/// by depth-first search, precedence by a boolean closure over all nodes,
/// then every implied pair removed.
pub fn reduction_oracle(g: &WorkflowGraph) -> BTreeMap<String, BTreeSet<String>> {
    let ids: Vec<&str> = g.nodes().map(|n| n.id.as_str()).collect();
    let n = ids.len();
    let pos = |id: &str| ids.iter().position(|&x| x == id).unwrap();
    let mut adj = vec![vec![false; n]; n];
    for (a, b) in g.edges() {
        adj[pos(a)][pos(b)] = true;
    }
    // 0 unvisited, 1 on stack, 2 finished
    fn dfs(u: usize, adj: &mut Vec<Vec<bool>>, color: &mut Vec<u8>) {
        color[u] = 1;
        for w in 0..adj.len() {
            if !adj[u][w] {
                continue;
            }
            if color[w] == 1 {
                adj[u][w] = false;
            } else if color[w] == 0 {
                dfs(w, adj, color);
            }
        }
        color[u] = 2;
    }
    let mut color = vec![0u8; n];
    dfs(pos(g.start()), &mut adj, &mut color);
    for u in 0..n {
        if color[u] == 0 {
            dfs(u, &mut adj, &mut color);
        }
    }
    let mut reach = adj.clone();
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    let acts: Vec<usize> = (0..n).filter(|&i| matches!(g.node(ids[i]).unwrap().kind, NodeKind::Activity(_))).collect();
    let mut out: BTreeMap<String, BTreeSet<String>> = acts.iter().map(|&a| (ids[a].to_string(), BTreeSet::new())).collect();
    for &a in &acts {
        for &b in &acts {
            if a == b || !reach[a][b] {
                continue;
            }
            let implied = acts.iter().any(|&c| c != a && c != b && reach[a][c] && reach[c][b]);
            if !implied {
                out.get_mut(ids[b]).unwrap().insert(ids[a].to_string());
            }
        }
    }
    out
}

pub fn descriptor(id: &str, caps: &[&str], license: LicenseKind, max_jobs: u32) -> ResourceDescriptor {
    ResourceDescriptor {
        id: id.into(),
        program: id.split('@').next().unwrap().into(),
        version: "1".into(),
        calculator: Calculator { name: id.split('@').nth(1).unwrap_or("local").into(), platform: "any".into(), max_jobs },
        capabilities: caps.iter().map(|c| c.to_string()).collect(),
        license: if license == LicenseKind::Open { License::open() } else { License::new(license, format!("{id} manual")) },
        template: LaunchTemplate { command: "run ${workdir}".into(), inputs: vec![], output: "out".into(), platform: "any".into() },
        cost_weight: 1.0,
    }
}

/// One open resource per capability used by the corpus.
pub fn corpus_registry() -> Registry {
    let r = Registry::new();
    for cap in ["gen", "md", "framework-db"] {
        r.register(descriptor(&format!("{cap}@local"), &[cap], LicenseKind::Open, 4)).unwrap();
    }
    r
}

pub type Script = dyn Fn(&JobRequest, &BTreeMap<String, Dataset>) -> Result<Dataset, String> + Send + Sync;

/// Completes every job on its first poll using a closure.
pub struct ScriptService {
    store: Arc<Store>,
    script: Box<Script>,
    jobs: Mutex<BTreeMap<JobId, (JobRequest, Option<JobStatus>)>>,
}

impl ScriptService {
    pub fn new(
        store: Arc<Store>,
        script: impl Fn(&JobRequest, &BTreeMap<String, Dataset>) -> Result<Dataset, String> + Send + Sync + 'static,
    ) -> Arc<Self> {
        Arc::new(ScriptService { store, script: Box::new(script), jobs: Mutex::new(BTreeMap::new()) })
    }
}

impl JobService for ScriptService {
    fn submit(&self, req: JobRequest) -> Result<JobHandle, ResourceError> {
        let mut jobs = self.jobs.lock().unwrap();
        let job = JobId(format!("job-{:06}", jobs.len() + 1));
        let handle = JobHandle { job: job.clone(), resource: req.resource.clone() };
        jobs.insert(job, (req, None));
        Ok(handle)
    }

    fn poll(&self, handle: &JobHandle) -> Result<JobStatus, ResourceError> {
        let mut jobs = self.jobs.lock().unwrap();
        let (req, status) =
            jobs.get_mut(&handle.job).ok_or_else(|| ResourceError::UnknownJob(handle.job.to_string()))?;
        if status.is_none() {
            let inputs = req.inputs.iter().map(|(s, k)| (s.clone(), self.store.get(k).unwrap())).collect();
            *status = Some(match (self.script)(req, &inputs) {
                Ok(ds) => JobStatus::Succeeded(self.store.put(&ds, &req.run, &req.activity).unwrap()),
                Err(e) => JobStatus::Failed(e),
            });
        }
        Ok(status.clone().unwrap())
    }
}

/// Arms taken by each decision on its first evaluation; later evaluations
/// take `else`. Arm `k` is branch `k`, or `else` when `k` equals the
/// branch count.
pub type Assignment = BTreeMap<String, usize>;

pub fn assignments(g: &WorkflowGraph) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for n in g.nodes() {
        if let Some(d) = n.as_decision() {
            out = out
                .into_iter()
                .flat_map(|a| {
                    (0..d.arity()).map(move |k| {
                        let mut a = a.clone();
                        a.insert(n.id.clone(), k);
                        a
                    })
                })
                .collect();
        }
    }
    out
}

pub fn arm_for(a: &Assignment, decision: &str, visit: u32, arity: usize) -> usize {
    if visit == 0 {
        a[decision]
    } else {
        arity - 1
    }
}

/// Output dataset for `activity`'s `occurrence`-th run that steers each
/// decision directly after it to the arm `a` prescribes.
pub fn steering_output(g: &WorkflowGraph, a: &Assignment, activity: &str, occurrence: u32) -> Dataset {
    let act = g.node(activity).unwrap().as_activity().unwrap();
    let mut ds = Dataset::new();
    for o in &act.outputs {
        ds.upsert(Observable::scalar(o.as_str(), 0.0, "1").unwrap());
    }
    for s in g.successors(activity) {
        let Some(d) = g.node(s).unwrap().as_decision() else { continue };
        let want = arm_for(a, s, occurrence, d.arity());
        let mut found = false;
        'search: for (guard, _) in &d.branches {
            let unit = guard.unit.name();
            let mut candidates = vec![];
            for (gd, _) in &d.branches {
                let l = gd.literal * gd.unit.factor_to(&guard.unit).unwrap_or(1.0);
                candidates.extend([l - 1.0, l, l + 1.0]);
            }
            for value in candidates {
                let mut trial = ds.clone();
                trial.upsert(Observable::scalar(guard.observable.as_str(), value, unit).unwrap());
                if d.choose(&trial) == Ok(want) {
                    ds = trial;
                    found = true;
                    break 'search;
                }
            }
        }
        assert!(found, "no value steers {s} to arm {want}");
    }
    ds
}
