use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use super::{NodeKind, WorkflowGraph};

/// Graphs with more decisions than this are checked structurally only.
pub const MAX_EXHAUSTIVE_DECISIONS: usize = 12;
/// Marking-graph size past which exploration is abandoned.
pub const MAX_STATES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Finding {
    Unreachable(String),
    NoTermination(String),
    UnguardedCycle(Vec<String>),
    JoinDeadlock(String),
    UnbalancedForkJoin(String),
    UnboundObjectFlow { producer: String, consumer: String },
}

impl Finding {
    pub fn kind(&self) -> &'static str {
        match self {
            Finding::Unreachable(_) => "Unreachable",
            Finding::NoTermination(_) => "NoTermination",
            Finding::UnguardedCycle(_) => "UnguardedCycle",
            Finding::JoinDeadlock(_) => "JoinDeadlock",
            Finding::UnbalancedForkJoin(_) => "UnbalancedForkJoin",
            Finding::UnboundObjectFlow { .. } => "UnboundObjectFlow",
        }
    }

    pub fn subject(&self) -> String {
        match self {
            Finding::Unreachable(n)
            | Finding::NoTermination(n)
            | Finding::JoinDeadlock(n)
            | Finding::UnbalancedForkJoin(n) => n.clone(),
            Finding::UnguardedCycle(ns) => ns.join(","),
            Finding::UnboundObjectFlow { producer, consumer } => format!("{producer}->{consumer}"),
        }
    }
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind(), self.subject())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerificationMode {
    Exhaustive,
    StructuralOnly,
}

impl VerificationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerificationMode::Exhaustive => "exhaustive",
            VerificationMode::StructuralOnly => "structural-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub findings: Vec<Finding>,
    pub mode: VerificationMode,
    /// Markings visited by the token game; zero when structural-only.
    pub states: usize,
}

impl VerificationReport {
    pub fn is_sound(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn has(&self, kind: &str) -> bool {
        self.findings.iter().any(|f| f.kind() == kind)
    }
}

/// Checks structure, then plays the token game over every reachable
/// marking (decisions branch nondeterministically).
pub fn verify(g: &WorkflowGraph) -> VerificationReport {
    let mut findings: BTreeSet<Finding> = structural_findings(g).into_iter().collect();
    let mut mode = VerificationMode::StructuralOnly;
    let mut states = 0;
    if g.decision_count() <= MAX_EXHAUSTIVE_DECISIONS {
        if let Some(dynamic) = TokenGame::new(g).explore(MAX_STATES) {
            states = dynamic.states;
            findings.extend(dynamic.findings);
            mode = VerificationMode::Exhaustive;
        }
    }
    VerificationReport { findings: findings.into_iter().collect(), mode, states }
}

pub fn structural_findings(g: &WorkflowGraph) -> Vec<Finding> {
    let mut out = Vec::new();
    let start = g.start();
    let reach = g.reachable_from(start);
    for n in g.nodes() {
        if n.id != start && !reach.contains(n.id.as_str()) {
            out.push(Finding::Unreachable(n.id.clone()));
        }
    }

    let finals: BTreeSet<&str> = g.finals().collect();
    let mut coreach: BTreeSet<&str> = finals.clone();
    let mut stack: Vec<&str> = finals.iter().copied().collect();
    while let Some(n) = stack.pop() {
        for p in g.predecessors(n) {
            if coreach.insert(p) {
                stack.push(p);
            }
        }
    }
    for n in g.nodes() {
        if !coreach.contains(n.id.as_str()) {
            out.push(Finding::NoTermination(n.id.clone()));
        }
    }

    for scc in cycles_without_decisions(g) {
        out.push(Finding::UnguardedCycle(scc));
    }

    for f in g.object_flows() {
        if !g.reachable_from(&f.producer).contains(f.consumer.as_str()) {
            out.push(Finding::UnboundObjectFlow { producer: f.producer.clone(), consumer: f.consumer.clone() });
        }
    }
    out
}

/// Strongly connected components with a cycle once decision nodes are
/// removed.
fn cycles_without_decisions(g: &WorkflowGraph) -> Vec<Vec<String>> {
    let ids: Vec<&str> =
        g.nodes().filter(|n| !matches!(n.kind, NodeKind::Decision(_))).map(|n| n.id.as_str()).collect();
    let keep: BTreeSet<&str> = ids.iter().copied().collect();
    let succ = |n: &str| -> Vec<&str> {
        g.successors(n).into_iter().filter(|s| keep.contains(s)).collect()
    };
    let reach: BTreeMap<&str, BTreeSet<&str>> = ids
        .iter()
        .map(|&n| {
            let mut seen = BTreeSet::new();
            let mut stack = succ(n);
            while let Some(m) = stack.pop() {
                if seen.insert(m) {
                    stack.extend(succ(m));
                }
            }
            (n, seen)
        })
        .collect();
    let mut done = BTreeSet::new();
    let mut out = Vec::new();
    for &n in &ids {
        if done.contains(n) || !reach[n].contains(n) {
            continue;
        }
        let comp: Vec<String> =
            ids.iter().filter(|&&m| reach[n].contains(m) && reach[m].contains(n)).map(|m| m.to_string()).collect();
        for m in &comp {
            done.insert(m.clone());
        }
        out.push(comp);
    }
    out
}

type Marking = Vec<u64>;

struct DynamicResult {
    findings: Vec<Finding>,
    states: usize,
}

/// One token per control edge; markings with two tokens on an edge are
/// reported and not explored further.
struct TokenGame<'g> {
    g: &'g WorkflowGraph,
    edges: Vec<(&'g str, &'g str)>,
    ins: HashMap<&'g str, Vec<usize>>,
    outs: HashMap<&'g str, Vec<usize>>,
}

enum Step {
    Next(Marking),
    Unsafe(String),
}

impl<'g> TokenGame<'g> {
    fn new(g: &'g WorkflowGraph) -> Self {
        let mut edges = Vec::new();
        let mut ins: HashMap<&str, Vec<usize>> = HashMap::new();
        let mut outs: HashMap<&str, Vec<usize>> = HashMap::new();
        for n in g.nodes() {
            for s in g.successors(&n.id) {
                let i = edges.len();
                edges.push((n.id.as_str(), s));
                outs.entry(n.id.as_str()).or_default().push(i);
                ins.entry(s).or_default().push(i);
            }
        }
        TokenGame { g, edges, ins, outs }
    }

    fn has(m: &Marking, e: usize) -> bool {
        m[e / 64] >> (e % 64) & 1 == 1
    }

    fn flip(m: &mut Marking, e: usize) {
        m[e / 64] ^= 1 << (e % 64);
    }

    fn marked(&self, m: &Marking) -> impl Iterator<Item = usize> + '_ {
        let m = m.clone();
        (0..self.edges.len()).filter(move |&e| Self::has(&m, e))
    }

    fn put(&self, m: &mut Marking, e: usize) -> Result<(), String> {
        if Self::has(m, e) {
            return Err(self.edges[e].1.to_string());
        }
        Self::flip(m, e);
        Ok(())
    }

    /// All moves from `m`, with a flag telling whether the move completed
    /// the run at a final node while tokens remained.
    fn steps(&self, m: &Marking) -> Vec<(Step, Option<String>)> {
        let mut out = Vec::new();
        let empty = Vec::new();
        for n in self.g.nodes() {
            let id = n.id.as_str();
            let ins = self.ins.get(id).unwrap_or(&empty);
            let outs = self.outs.get(id).unwrap_or(&empty);
            let fire = |consume: &[usize], produce: &[usize]| -> Step {
                let mut next = m.clone();
                for &e in consume {
                    Self::flip(&mut next, e);
                }
                for &e in produce {
                    if let Err(at) = self.put(&mut next, e) {
                        return Step::Unsafe(at);
                    }
                }
                Step::Next(next)
            };
            match &n.kind {
                NodeKind::Start => {}
                NodeKind::Join => {
                    if ins.iter().all(|&e| Self::has(m, e)) {
                        out.push((fire(ins, outs), None));
                    }
                }
                NodeKind::Final => {
                    for &e in ins.iter().filter(|&&e| Self::has(m, e)) {
                        let step = fire(&[e], &[]);
                        let residual = match &step {
                            Step::Next(next) if next.iter().any(|w| *w != 0) => Some(id.to_string()),
                            _ => None,
                        };
                        out.push((step, residual));
                    }
                }
                NodeKind::Decision(_) => {
                    for &e in ins.iter().filter(|&&e| Self::has(m, e)) {
                        for &o in outs {
                            out.push((fire(&[e], &[o]), None));
                        }
                    }
                }
                NodeKind::Activity(_) | NodeKind::Fork | NodeKind::Merge => {
                    for &e in ins.iter().filter(|&&e| Self::has(m, e)) {
                        out.push((fire(&[e], outs), None));
                    }
                }
            }
        }
        out
    }

    fn explore(&self, cap: usize) -> Option<DynamicResult> {
        let words = self.edges.len() / 64 + 1;
        let mut init = vec![0u64; words];
        for &e in self.outs.get(self.g.start()).into_iter().flatten() {
            Self::flip(&mut init, e);
        }
        let mut index: HashMap<Marking, usize> = HashMap::new();
        let mut states: Vec<Marking> = vec![init.clone()];
        let mut succ: Vec<Vec<usize>> = vec![];
        index.insert(init, 0);
        let mut queue = VecDeque::from([0usize]);
        let mut findings = BTreeSet::new();
        let mut terminal_stuck = BTreeSet::new();

        while let Some(s) = queue.pop_front() {
            let m = states[s].clone();
            let steps = self.steps(&m);
            let mut next_ids = Vec::new();
            if steps.is_empty() && m.iter().any(|w| *w != 0) {
                terminal_stuck.insert(s);
                let mut joined = false;
                for n in self.g.nodes().filter(|n| n.kind == NodeKind::Join) {
                    let ins = &self.ins[n.id.as_str()];
                    if ins.iter().any(|&e| Self::has(&m, e)) {
                        findings.insert(Finding::JoinDeadlock(n.id.clone()));
                        joined = true;
                    }
                }
                if !joined {
                    if let Some(e) = self.marked(&m).next() {
                        findings.insert(Finding::NoTermination(self.edges[e].1.to_string()));
                    }
                }
            }
            for (step, residual) in steps {
                if let Some(at) = residual {
                    findings.insert(Finding::UnbalancedForkJoin(at));
                }
                match step {
                    Step::Unsafe(at) => {
                        findings.insert(Finding::UnbalancedForkJoin(at));
                    }
                    Step::Next(next) => {
                        let id = match index.get(&next) {
                            Some(&i) => i,
                            None => {
                                if states.len() >= cap {
                                    return None;
                                }
                                let i = states.len();
                                states.push(next.clone());
                                index.insert(next, i);
                                queue.push_back(i);
                                i
                            }
                        };
                        next_ids.push(id);
                    }
                }
            }
            if succ.len() <= s {
                succ.resize(s + 1, Vec::new());
            }
            succ[s] = next_ids;
        }
        succ.resize(states.len(), Vec::new());

        // Option to complete: every marking can still reach the empty one.
        let mut pred: Vec<Vec<usize>> = vec![Vec::new(); states.len()];
        for (s, ns) in succ.iter().enumerate() {
            for &n in ns {
                pred[n].push(s);
            }
        }
        let mut live = vec![false; states.len()];
        let mut stack: Vec<usize> =
            (0..states.len()).filter(|&s| states[s].iter().all(|w| *w == 0)).collect();
        for &s in &stack {
            live[s] = true;
        }
        while let Some(s) = stack.pop() {
            for &p in &pred[s] {
                if !live[p] {
                    live[p] = true;
                    stack.push(p);
                }
            }
        }
        let already_explained = !findings.is_empty();
        if !already_explained {
            for (s, m) in states.iter().enumerate() {
                if !live[s] && !terminal_stuck.contains(&s) {
                    if let Some(e) = self.marked(m).next() {
                        findings.insert(Finding::NoTermination(self.edges[e].1.to_string()));
                    }
                    break;
                }
            }
        }
        Some(DynamicResult { findings: findings.into_iter().collect(), states: states.len() })
    }
}
