use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use roxmltree::{Document, Node as XNode};

use super::DslError;
use crate::resources::escape_xml as esc;
use crate::workflow::{verify, NodeKind, WorkflowGraph};

pub const DEFAULT_MAX_ITERATIONS: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobXmlOptions {
    /// Emit even when verification reports findings.
    pub force: bool,
    pub max_iterations: u32,
}

impl Default for JobXmlOptions {
    fn default() -> Self {
        JobXmlOptions { force: false, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

/// Activity precedence over the graph without back edges: `a` precedes
/// `b` when a control path leads from `a` to `b`.
pub fn activity_precedence(g: &WorkflowGraph) -> BTreeMap<String, BTreeSet<String>> {
    let back = g.back_edges();
    let mut after: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for (a, _) in g.activities() {
        let mut seen = BTreeSet::new();
        let mut stack = vec![a.to_string()];
        while let Some(n) = stack.pop() {
            for s in g.successors(&n) {
                if back.contains(&(n.clone(), s.to_string())) {
                    continue;
                }
                if seen.insert(s.to_string()) {
                    stack.push(s.to_string());
                }
            }
        }
        let acts = seen.into_iter().filter(|n| g.node(n).and_then(|x| x.as_activity()).is_some()).collect();
        after.insert(a.to_string(), acts);
    }
    after
}

/// Direct dependencies: the transitive reduction of activity precedence,
/// keyed by the dependent activity.
pub fn job_dependencies(g: &WorkflowGraph) -> BTreeMap<String, BTreeSet<String>> {
    let prec = activity_precedence(g);
    let mut deps: BTreeMap<String, BTreeSet<String>> = prec.keys().map(|k| (k.clone(), BTreeSet::new())).collect();
    for (a, later) in &prec {
        for b in later {
            if a == b {
                continue;
            }
            let implied = later.iter().any(|c| c != b && c != a && prec[c].contains(b));
            if !implied {
                deps.get_mut(b).unwrap().insert(a.clone());
            }
        }
    }
    deps
}

/// Nontrivial strongly connected components, each listed in topological
/// order, keyed by their first node.
fn loops(g: &WorkflowGraph) -> Vec<Vec<String>> {
    let order = g.topo_order();
    let reach: BTreeMap<&str, BTreeSet<&str>> = order.iter().map(|&n| (n, g.reachable_from(n))).collect();
    let mut done = BTreeSet::new();
    let mut out = Vec::new();
    for &n in &order {
        if done.contains(n) || !reach[n].contains(n) {
            continue;
        }
        let comp: Vec<String> = order
            .iter()
            .filter(|&&m| reach[n].contains(m) && reach[m].contains(n))
            .map(|m| m.to_string())
            .collect();
        done.extend(comp.iter().cloned());
        out.push(comp);
    }
    out
}

/// Renders the job-sequence document.
pub fn to_job_xml(g: &WorkflowGraph, opts: JobXmlOptions) -> Result<String, DslError> {
    if !opts.force {
        let report = verify(g);
        if !report.is_sound() {
            return Err(DslError::UnsoundWorkflow(report.findings));
        }
    }
    let deps = job_dependencies(g);
    let cycles = loops(g);
    let member: BTreeMap<&str, usize> =
        cycles.iter().enumerate().flat_map(|(i, c)| c.iter().map(move |n| (n.as_str(), i))).collect();

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<workflow name=\"{}\">", esc(g.name()));
    for r in g.source_refs() {
        let _ = writeln!(out, "  <source-ref>{}</source-ref>", esc(r));
    }
    let mut emitted = BTreeSet::new();
    for id in g.topo_order() {
        if emitted.contains(id) {
            continue;
        }
        if let Some(&c) = member.get(id) {
            let nodes = &cycles[c];
            let decision = nodes
                .iter()
                .find(|n| {
                    g.node(n).and_then(|x| x.as_decision()).is_some()
                        && g.successors(n).iter().any(|s| !nodes.iter().any(|m| m == s))
                })
                .or_else(|| nodes.iter().find(|n| g.node(n).and_then(|x| x.as_decision()).is_some()));
            match decision {
                Some(d) => {
                    let _ = writeln!(out, "  <loop decision=\"{}\" max=\"{}\">", esc(d), opts.max_iterations);
                }
                None => {
                    let _ = writeln!(out, "  <loop max=\"{}\">", opts.max_iterations);
                }
            }
            for n in nodes {
                emit_node(g, n, &deps, "    ", &mut out);
                emitted.insert(n.as_str());
            }
            out.push_str("  </loop>\n");
        } else {
            emit_node(g, id, &deps, "  ", &mut out);
            emitted.insert(id);
        }
    }
    out.push_str("</workflow>\n");
    Ok(out)
}

fn emit_node(g: &WorkflowGraph, id: &str, deps: &BTreeMap<String, BTreeSet<String>>, ind: &str, out: &mut String) {
    let node = g.node(id).unwrap();
    match &node.kind {
        NodeKind::Start | NodeKind::Final => {}
        NodeKind::Activity(a) => {
            let _ = write!(out, "{ind}<job id=\"{}\"", esc(id));
            if let Some(p) = &a.binding.program {
                let _ = write!(out, " program=\"{}\"", esc(p));
            }
            if let Some(r) = &a.binding.actuator {
                let _ = write!(out, " actuator=\"{}\"", esc(r));
            }
            out.push_str(">\n");
            for c in &a.binding.capabilities {
                let _ = writeln!(out, "{ind}  <capability>{}</capability>", esc(c));
            }
            for f in g.flows_into(id) {
                let _ = writeln!(out, "{ind}  <input slot=\"{}\" source=\"{}\">", esc(&f.slot), esc(&f.producer));
                for (obs, unit) in f.spec.wanted() {
                    let _ = writeln!(out, "{ind}    <observable name=\"{}\" unit=\"{}\"/>", esc(obs), esc(unit.name()));
                }
                let _ = writeln!(out, "{ind}  </input>");
            }
            for (k, v) in &a.params {
                let _ = writeln!(out, "{ind}  <param name=\"{}\" value=\"{}\"/>", esc(k), esc(v));
            }
            for o in &a.outputs {
                let _ = writeln!(out, "{ind}  <output observable=\"{}\"/>", esc(o));
            }
            if let Some(c) = &a.cite {
                let _ = writeln!(out, "{ind}  <cite>{}</cite>", esc(c));
            }
            for d in &deps[id] {
                let _ = writeln!(out, "{ind}  <depends-on job=\"{}\"/>", esc(d));
            }
            let _ = writeln!(out, "{ind}</job>");
        }
        NodeKind::Fork => {
            let _ = writeln!(out, "{ind}<fork id=\"{}\">", esc(id));
            for s in g.successors(id) {
                let _ = writeln!(out, "{ind}  <branch node=\"{}\"/>", esc(s));
            }
            let _ = writeln!(out, "{ind}</fork>");
        }
        NodeKind::Join | NodeKind::Merge => {
            let tag = if node.kind == NodeKind::Join { "join" } else { "merge" };
            let _ = writeln!(out, "{ind}<{tag} id=\"{}\">", esc(id));
            for p in g.predecessors(id) {
                let _ = writeln!(out, "{ind}  <wait node=\"{}\"/>", esc(p));
            }
            let _ = writeln!(out, "{ind}</{tag}>");
        }
        NodeKind::Decision(d) => {
            let _ = writeln!(out, "{ind}<decision id=\"{}\">", esc(id));
            for (guard, target) in &d.branches {
                let _ = writeln!(
                    out,
                    "{ind}  <when observable=\"{}\" op=\"{}\" value=\"{:?}\" unit=\"{}\" target=\"{}\"/>",
                    esc(&guard.observable),
                    esc(guard.op.symbol()),
                    guard.literal,
                    esc(guard.unit.name()),
                    esc(target)
                );
            }
            let _ = writeln!(out, "{ind}  <else target=\"{}\"/>", esc(&d.otherwise));
            let _ = writeln!(out, "{ind}</decision>");
        }
    }
}

/// A parsed job-sequence document: job ids in document order and their
/// dependencies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSequence {
    pub name: String,
    pub jobs: Vec<String>,
    pub depends_on: BTreeMap<String, BTreeSet<String>>,
}

fn xml_err(msg: impl Into<String>) -> DslError {
    DslError::InvalidJobXml(msg.into())
}

fn need<'a>(n: XNode<'a, '_>, attr: &str) -> Result<&'a str, DslError> {
    n.attribute(attr).ok_or_else(|| xml_err(format!("<{}> lacks attribute {attr:?}", n.tag_name().name())))
}

fn only(n: XNode<'_, '_>, allowed: &[&str]) -> Result<(), DslError> {
    for c in n.children().filter(|c| c.is_element()) {
        if !allowed.contains(&c.tag_name().name()) {
            return Err(xml_err(format!("<{}> not allowed inside <{}>", c.tag_name().name(), n.tag_name().name())));
        }
    }
    Ok(())
}

/// Checks a document against the job-sequence schema (docs/jobseq.xsd)
/// and that its dependencies name known jobs and form a DAG.
pub fn validate_job_xml(text: &str) -> Result<JobSequence, DslError> {
    let doc = Document::parse(text).map_err(|e| xml_err(e.to_string()))?;
    let root = doc.root_element();
    if !root.has_tag_name("workflow") {
        return Err(xml_err("root element must be <workflow>"));
    }
    let name = need(root, "name")?.to_string();
    only(root, &["source-ref", "job", "loop", "fork", "join", "merge", "decision"])?;
    let mut seq = JobSequence { name, jobs: Vec::new(), depends_on: BTreeMap::new() };
    let mut ids = BTreeSet::new();
    let mut visit = |n: XNode<'_, '_>, seq: &mut JobSequence| -> Result<(), DslError> {
        let id = need(n, "id")?.to_string();
        if !ids.insert(id.clone()) {
            return Err(xml_err(format!("duplicate id {id:?}")));
        }
        match n.tag_name().name() {
            "job" => {
                only(n, &["capability", "input", "param", "output", "cite", "depends-on"])?;
                let mut deps = BTreeSet::new();
                for c in n.children().filter(|c| c.is_element()) {
                    match c.tag_name().name() {
                        "input" => {
                            need(c, "slot")?;
                            need(c, "source")?;
                            only(c, &["observable"])?;
                            for o in c.children().filter(|o| o.is_element()) {
                                need(o, "name")?;
                                need(o, "unit")?;
                            }
                        }
                        "param" => {
                            need(c, "name")?;
                            need(c, "value")?;
                        }
                        "output" => {
                            need(c, "observable")?;
                        }
                        "depends-on" => {
                            deps.insert(need(c, "job")?.to_string());
                        }
                        _ => {}
                    }
                }
                seq.jobs.push(id.clone());
                seq.depends_on.insert(id, deps);
            }
            "fork" => {
                only(n, &["branch"])?;
                for c in n.children().filter(|c| c.is_element()) {
                    need(c, "node")?;
                }
            }
            "join" | "merge" => {
                only(n, &["wait"])?;
                for c in n.children().filter(|c| c.is_element()) {
                    need(c, "node")?;
                }
            }
            "decision" => {
                only(n, &["when", "else"])?;
                for c in n.children().filter(|c| c.is_element()) {
                    need(c, "target")?;
                    if c.has_tag_name("when") {
                        for a in ["observable", "op", "value", "unit"] {
                            need(c, a)?;
                        }
                    }
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    };
    for c in root.children().filter(|c| c.is_element()) {
        match c.tag_name().name() {
            "source-ref" => {}
            "loop" => {
                let max = need(c, "max")?;
                if max.parse::<u32>().map_or(true, |m| m == 0) {
                    return Err(xml_err(format!("bad loop max {max:?}")));
                }
                only(c, &["job", "fork", "join", "merge", "decision"])?;
                for j in c.children().filter(|j| j.is_element()) {
                    visit(j, &mut seq)?;
                }
            }
            _ => visit(c, &mut seq)?,
        }
    }
    let jobs: BTreeSet<&String> = seq.jobs.iter().collect();
    for (j, deps) in &seq.depends_on {
        for d in deps {
            if !jobs.contains(d) {
                return Err(xml_err(format!("job {j:?} depends on unknown job {d:?}")));
            }
        }
    }
    // Kahn: dependencies must be acyclic.
    let mut indeg: BTreeMap<&str, usize> = seq.depends_on.iter().map(|(j, d)| (j.as_str(), d.len())).collect();
    let mut ready: Vec<&str> = indeg.iter().filter(|(_, &d)| d == 0).map(|(j, _)| *j).collect();
    let mut seen = 0;
    while let Some(j) = ready.pop() {
        seen += 1;
        for (k, deps) in &seq.depends_on {
            if deps.contains(j) {
                let d = indeg.get_mut(k.as_str()).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.push(k);
                }
            }
        }
    }
    if seen != seq.jobs.len() {
        return Err(xml_err("depends-on edges form a cycle"));
    }
    Ok(seq)
}
