use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::quantities::{Dataset, ExtractionSpec, Unit};
use crate::resources::BindingRequirement;

use super::{GuardError, StructuralViolation, WorkflowError};

/// Node identifiers: `[A-Za-z_][A-Za-z0-9_-]*`.
pub fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        && !s.ends_with('-')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BindingVariant {
    PinnedBoth,
    PinnedProgram,
    Free,
}

impl BindingVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            BindingVariant::PinnedBoth => "pinned-both",
            BindingVariant::PinnedProgram => "pinned-program",
            BindingVariant::Free => "free",
        }
    }
}

/// Which program and actuator an activity runs on, if fixed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Binding {
    pub program: Option<String>,
    pub actuator: Option<String>,
    pub capabilities: BTreeSet<String>,
}

impl Binding {
    pub fn pinned(program: &str, actuator: &str) -> Self {
        Binding { program: Some(program.into()), actuator: Some(actuator.into()), capabilities: BTreeSet::new() }
    }

    pub fn program(program: &str) -> Self {
        Binding { program: Some(program.into()), actuator: None, capabilities: BTreeSet::new() }
    }

    pub fn free(capabilities: &[&str]) -> Self {
        Binding { program: None, actuator: None, capabilities: capabilities.iter().map(|c| c.to_string()).collect() }
    }

    pub fn with_capabilities(mut self, capabilities: &[&str]) -> Self {
        self.capabilities.extend(capabilities.iter().map(|c| c.to_string()));
        self
    }

    pub fn variant(&self) -> Result<BindingVariant, String> {
        match (&self.program, &self.actuator) {
            (Some(_), Some(_)) => Ok(BindingVariant::PinnedBoth),
            (Some(_), None) => Ok(BindingVariant::PinnedProgram),
            (None, Some(_)) => Err("actuator pinned without a program".into()),
            (None, None) if self.capabilities.is_empty() => {
                Err("free binding needs at least one capability".into())
            }
            (None, None) => Ok(BindingVariant::Free),
        }
    }

    pub fn requirement(&self) -> BindingRequirement {
        BindingRequirement {
            program: self.program.clone(),
            actuator: self.actuator.clone(),
            capabilities: self.capabilities.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Eq,
    Ne,
    Ge,
    Gt,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Le, CmpOp::Eq, CmpOp::Ne, CmpOp::Ge, CmpOp::Gt];

    pub fn symbol(&self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Ge => ">=",
            CmpOp::Gt => ">",
        }
    }

    pub fn parse(s: &str) -> Option<CmpOp> {
        CmpOp::ALL.into_iter().find(|op| op.symbol() == s)
    }

    pub fn apply(&self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
        }
    }
}

/// `observable op literal unit`, evaluated on a scalar observable.
#[derive(Debug, Clone, PartialEq)]
pub struct Guard {
    pub observable: String,
    pub op: CmpOp,
    pub literal: f64,
    pub unit: Unit,
}

impl Guard {
    pub fn new(observable: &str, op: CmpOp, literal: f64, unit: &str) -> Result<Self, WorkflowError> {
        let unit = Unit::parse(unit).map_err(|e| WorkflowError::Invalid(e.to_string()))?;
        if !literal.is_finite() {
            return Err(WorkflowError::Invalid(format!("guard literal {literal} is not finite")));
        }
        Ok(Guard { observable: observable.into(), op, literal, unit })
    }

    /// Converts the observable into the literal's unit, then compares.
    pub fn evaluate(&self, ds: &Dataset) -> Result<bool, GuardError> {
        let obs = ds.get(&self.observable).ok_or_else(|| GuardError::MissingObservable(self.observable.clone()))?;
        let value = obs.as_scalar().ok_or_else(|| GuardError::NotScalar(self.observable.clone()))?;
        let factor = obs.unit().factor_to(&self.unit).map_err(|_| GuardError::DimensionMismatch {
            observable: self.observable.clone(),
            from: obs.unit().name().to_string(),
            to: self.unit.name().to_string(),
        })?;
        Ok(self.op.apply(value * factor, self.literal))
    }
}

impl Eq for Guard {}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {:?}", self.observable, self.op.symbol(), self.literal)?;
        if self.unit != Unit::dimensionless() {
            write!(f, " {:?}", self.unit.name())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Activity {
    pub binding: Binding,
    pub params: BTreeMap<String, String>,
    /// Observables the result must contain.
    pub outputs: Vec<String>,
    pub cite: Option<String>,
}

impl Activity {
    pub fn new(binding: Binding) -> Self {
        Activity { binding, ..Default::default() }
    }

    pub fn param(mut self, key: &str, value: &str) -> Self {
        self.params.insert(key.into(), value.into());
        self
    }

    pub fn outputs(mut self, names: &[&str]) -> Self {
        self.outputs = names.iter().map(|n| n.to_string()).collect();
        self
    }

    pub fn cite(mut self, text: &str) -> Self {
        self.cite = Some(text.into());
        self
    }
}

/// Ordered guarded branches plus the `else` target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decision {
    pub branches: Vec<(Guard, String)>,
    pub otherwise: String,
}

impl Decision {
    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.branches.iter().map(|(_, t)| t.as_str()).chain(std::iter::once(self.otherwise.as_str()))
    }

    /// Index of the first branch whose guard holds; `branches.len()` means else.
    pub fn choose(&self, ds: &Dataset) -> Result<usize, GuardError> {
        for (i, (g, _)) in self.branches.iter().enumerate() {
            if g.evaluate(ds)? {
                return Ok(i);
            }
        }
        Ok(self.branches.len())
    }

    pub fn target(&self, outcome: usize) -> &str {
        self.branches.get(outcome).map_or(self.otherwise.as_str(), |(_, t)| t.as_str())
    }

    pub fn arity(&self) -> usize {
        self.branches.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Start,
    Final,
    Activity(Activity),
    Decision(Decision),
    Fork,
    Join,
    Merge,
}

impl NodeKind {
    pub fn label(&self) -> &'static str {
        match self {
            NodeKind::Start => "start",
            NodeKind::Final => "final",
            NodeKind::Activity(_) => "activity",
            NodeKind::Decision(_) => "decision",
            NodeKind::Fork => "fork",
            NodeKind::Join => "join",
            NodeKind::Merge => "merge",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
}

impl Node {
    pub fn new(id: &str, kind: NodeKind) -> Self {
        Node { id: id.into(), kind }
    }

    pub fn start(id: &str) -> Self {
        Node::new(id, NodeKind::Start)
    }

    pub fn final_(id: &str) -> Self {
        Node::new(id, NodeKind::Final)
    }

    pub fn activity(id: &str, a: Activity) -> Self {
        Node::new(id, NodeKind::Activity(a))
    }

    pub fn fork(id: &str) -> Self {
        Node::new(id, NodeKind::Fork)
    }

    pub fn join(id: &str) -> Self {
        Node::new(id, NodeKind::Join)
    }

    pub fn merge(id: &str) -> Self {
        Node::new(id, NodeKind::Merge)
    }

    pub fn decision(id: &str, branches: Vec<(Guard, &str)>, otherwise: &str) -> Self {
        Node::new(
            id,
            NodeKind::Decision(Decision {
                branches: branches.into_iter().map(|(g, t)| (g, t.to_string())).collect(),
                otherwise: otherwise.into(),
            }),
        )
    }

    pub fn as_activity(&self) -> Option<&Activity> {
        match &self.kind {
            NodeKind::Activity(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_decision(&self) -> Option<&Decision> {
        match &self.kind {
            NodeKind::Decision(d) => Some(d),
            _ => None,
        }
    }
}

/// Data handed from `producer`'s result to `consumer`'s input `slot`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObjectFlow {
    pub producer: String,
    pub consumer: String,
    pub slot: String,
    pub spec: ExtractionSpec,
}

impl ObjectFlow {
    pub fn new(producer: &str, consumer: &str, slot: &str, spec: ExtractionSpec) -> Self {
        ObjectFlow { producer: producer.into(), consumer: consumer.into(), slot: slot.into(), spec }
    }
}

/// A structurally valid activity diagram. Construct with [`build_graph`]
/// or [`GraphBuilder`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowGraph {
    name: String,
    nodes: BTreeMap<String, Node>,
    edges: BTreeSet<(String, String)>,
    object_flows: Vec<ObjectFlow>,
    source_refs: Vec<String>,
}

impl WorkflowGraph {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn object_flows(&self) -> &[ObjectFlow] {
        &self.object_flows
    }

    pub fn source_refs(&self) -> &[String] {
        &self.source_refs
    }

    pub fn start(&self) -> &str {
        self.nodes.values().find(|n| n.kind == NodeKind::Start).map(|n| n.id.as_str()).unwrap_or_default()
    }

    pub fn finals(&self) -> impl Iterator<Item = &str> {
        self.nodes.values().filter(|n| n.kind == NodeKind::Final).map(|n| n.id.as_str())
    }

    pub fn activities(&self) -> impl Iterator<Item = (&str, &Activity)> {
        self.nodes.values().filter_map(|n| n.as_activity().map(|a| (n.id.as_str(), a)))
    }

    /// Successors in id order; for decisions, branch order then else.
    pub fn successors(&self, id: &str) -> Vec<&str> {
        if let Some(d) = self.nodes.get(id).and_then(Node::as_decision) {
            return d.targets().collect();
        }
        self.edges
            .range((id.to_string(), String::new())..)
            .take_while(|(a, _)| a == id)
            .map(|(_, b)| b.as_str())
            .collect()
    }

    pub fn predecessors(&self, id: &str) -> Vec<&str> {
        self.edges.iter().filter(|(_, b)| b == id).map(|(a, _)| a.as_str()).collect()
    }

    pub fn flows_into<'a>(&'a self, consumer: &'a str) -> impl Iterator<Item = &'a ObjectFlow> + 'a {
        self.object_flows.iter().filter(move |f| f.consumer == consumer)
    }

    /// Edges closing a cycle in a depth-first walk from the start node
    /// (successors in order), then from any unvisited node in id order.
    pub fn back_edges(&self) -> BTreeSet<(String, String)> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Open,
            Done,
        }
        let mut mark: BTreeMap<&str, Mark> = self.nodes.keys().map(|k| (k.as_str(), Mark::New)).collect();
        let mut back = BTreeSet::new();
        let roots = std::iter::once(self.start()).chain(self.nodes.keys().map(String::as_str));
        for root in roots {
            if mark.get(root) != Some(&Mark::New) {
                continue;
            }
            let mut stack: Vec<(&str, usize)> = vec![(root, 0)];
            mark.insert(root, Mark::Open);
            while let Some((n, i)) = stack.pop() {
                let succ = self.successors(n);
                if i < succ.len() {
                    stack.push((n, i + 1));
                    let s = succ[i];
                    match mark[s] {
                        Mark::New => {
                            mark.insert(s, Mark::Open);
                            stack.push((s, 0));
                        }
                        Mark::Open => {
                            back.insert((n.to_string(), s.to_string()));
                        }
                        Mark::Done => {}
                    }
                } else {
                    mark.insert(n, Mark::Done);
                }
            }
        }
        back
    }

    /// Topological order of the graph without its back edges; ties broken
    /// by id.
    pub fn topo_order(&self) -> Vec<&str> {
        let back = self.back_edges();
        let mut indeg: BTreeMap<&str, usize> = self.nodes.keys().map(|k| (k.as_str(), 0)).collect();
        for (a, b) in &self.edges {
            if !back.contains(&(a.clone(), b.clone())) {
                *indeg.get_mut(b.as_str()).unwrap() += 1;
            }
        }
        let mut ready: BTreeSet<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(k, _)| *k).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(n) = ready.pop_first() {
            order.push(n);
            for s in self.successors(n) {
                if back.contains(&(n.to_string(), s.to_string())) {
                    continue;
                }
                let d = indeg.get_mut(s).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(s);
                }
            }
        }
        order
    }

    /// Nodes reachable from `from` by one or more edges.
    pub fn reachable_from(&self, from: &str) -> BTreeSet<&str> {
        let mut seen = BTreeSet::new();
        let mut stack = self.successors(from);
        while let Some(n) = stack.pop() {
            if seen.insert(n) {
                stack.extend(self.successors(n));
            }
        }
        seen
    }

    /// One requirement per activity, in topological order.
    pub fn binding_requirements(&self) -> Vec<(String, BindingRequirement)> {
        self.topo_order()
            .into_iter()
            .filter_map(|id| self.nodes[id].as_activity().map(|a| (id.to_string(), a.binding.requirement())))
            .collect()
    }

    pub fn decision_count(&self) -> usize {
        self.nodes.values().filter(|n| n.as_decision().is_some()).count()
    }
}

/// Validates nodes, edges and object flows into a graph.
///
/// Decision out-edges are taken from the decision's branches; listing
/// them again in `edges` is allowed.
pub fn build_graph(
    name: &str,
    nodes: Vec<Node>,
    edges: Vec<(String, String)>,
    object_flows: Vec<ObjectFlow>,
    source_refs: Vec<String>,
) -> Result<WorkflowGraph, WorkflowError> {
    use StructuralViolation as V;
    let mut v = Vec::new();
    let mut map = BTreeMap::new();
    for n in nodes {
        if !is_ident(&n.id) {
            v.push(V::InvalidId(n.id.clone()));
        }
        if map.contains_key(&n.id) {
            v.push(V::DuplicateNode(n.id.clone()));
            continue;
        }
        map.insert(n.id.clone(), n);
    }

    let mut edge_set = BTreeSet::new();
    for (a, b) in edges {
        if !map.contains_key(&a) || !map.contains_key(&b) {
            v.push(V::DanglingEdge(a, b));
            continue;
        }
        if let Some(d) = map[&a].as_decision() {
            if !d.targets().any(|t| t == b) {
                v.push(V::UnguardedDecisionEdge(a.clone(), b.clone()));
            }
            continue;
        }
        edge_set.insert((a, b));
    }
    for n in map.values() {
        if let Some(d) = n.as_decision() {
            let mut seen = BTreeSet::new();
            for t in d.targets() {
                if !map.contains_key(t) {
                    v.push(V::DanglingEdge(n.id.clone(), t.to_string()));
                } else if !seen.insert(t) {
                    v.push(V::DuplicateBranch(n.id.clone(), t.to_string()));
                } else {
                    edge_set.insert((n.id.clone(), t.to_string()));
                }
            }
        }
    }

    let starts: Vec<&String> = map.values().filter(|n| n.kind == NodeKind::Start).map(|n| &n.id).collect();
    match starts.len() {
        0 => v.push(V::NoStart),
        1 => {}
        _ => v.push(V::TwoStarts(starts.iter().map(|s| s.to_string()).collect())),
    }
    if !map.values().any(|n| n.kind == NodeKind::Final) {
        v.push(V::NoFinal);
    }

    for n in map.values() {
        let ins = edge_set.iter().filter(|(_, b)| *b == n.id).count();
        let outs = edge_set.iter().filter(|(a, _)| *a == n.id).count();
        let ok = match &n.kind {
            NodeKind::Start => ins == 0 && outs == 1,
            NodeKind::Final => ins >= 1 && outs == 0,
            NodeKind::Activity(_) => ins == 1 && outs == 1,
            NodeKind::Decision(_) => ins == 1 && outs >= 2,
            NodeKind::Fork => ins == 1 && outs >= 2,
            NodeKind::Join | NodeKind::Merge => ins >= 2 && outs == 1,
        };
        if !ok {
            v.push(V::BadDegree { node: n.id.clone(), kind: n.kind.label(), ins, outs });
        }
        if let NodeKind::Activity(a) = &n.kind {
            if let Err(reason) = a.binding.variant() {
                v.push(V::InvalidBinding(n.id.clone(), reason));
            }
        }
    }

    let mut flows = object_flows;
    flows.sort_by(|a, b| (&a.consumer, &a.slot).cmp(&(&b.consumer, &b.slot)));
    for w in flows.windows(2) {
        if w[0].consumer == w[1].consumer && w[0].slot == w[1].slot {
            v.push(V::DuplicateSlot(w[0].consumer.clone(), w[0].slot.clone()));
        }
    }
    for f in &flows {
        for end in [&f.producer, &f.consumer] {
            if map.get(end).and_then(Node::as_activity).is_none() {
                v.push(V::BadObjectFlow { producer: f.producer.clone(), consumer: f.consumer.clone() });
                break;
            }
        }
        if !is_ident(&f.slot) {
            v.push(V::InvalidId(f.slot.clone()));
        }
    }

    if v.is_empty() {
        Ok(WorkflowGraph {
            name: name.to_string(),
            nodes: map,
            edges: edge_set,
            object_flows: flows,
            source_refs,
        })
    } else {
        v.sort();
        v.dedup();
        Err(WorkflowError::Structural(v))
    }
}

/// Incremental construction for code and tests.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    name: String,
    nodes: Vec<Node>,
    edges: Vec<(String, String)>,
    flows: Vec<ObjectFlow>,
    refs: Vec<String>,
}

impl GraphBuilder {
    pub fn new(name: &str) -> Self {
        GraphBuilder { name: name.into(), ..Default::default() }
    }

    pub fn node(mut self, n: Node) -> Self {
        self.nodes.push(n);
        self
    }

    pub fn activity(self, id: &str, a: Activity) -> Self {
        self.node(Node::activity(id, a))
    }

    pub fn edge(mut self, a: &str, b: &str) -> Self {
        self.edges.push((a.into(), b.into()));
        self
    }

    /// Edges along `path`.
    pub fn chain(mut self, path: &[&str]) -> Self {
        for w in path.windows(2) {
            self.edges.push((w[0].into(), w[1].into()));
        }
        self
    }

    pub fn flow(mut self, f: ObjectFlow) -> Self {
        self.flows.push(f);
        self
    }

    pub fn cite(mut self, r: &str) -> Self {
        self.refs.push(r.into());
        self
    }

    pub fn build(self) -> Result<WorkflowGraph, WorkflowError> {
        build_graph(&self.name, self.nodes, self.edges, self.flows, self.refs)
    }
}
