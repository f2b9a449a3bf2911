use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::workflow::{BindingVariant, NodeKind, WorkflowGraph};

fn q(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn lane_label(v: BindingVariant) -> &'static str {
    match v {
        BindingVariant::PinnedBoth => "program and actuator fixed",
        BindingVariant::PinnedProgram => "program fixed, actuator chosen",
        BindingVariant::Free => "chosen by the system",
    }
}

/// Graphviz rendering: activities as rounded boxes grouped into one
/// cluster per binding variant, decisions as diamonds, fork/join as bars.
pub fn to_dot(g: &WorkflowGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "digraph {} {{", q(g.name()));
    out.push_str("  rankdir=TB;\n  node [fontname=\"Helvetica\", fontsize=10];\n");
    let mut lanes: BTreeMap<BindingVariant, Vec<&str>> = BTreeMap::new();
    for id in g.topo_order() {
        let node = g.node(id).unwrap();
        let attrs = match &node.kind {
            NodeKind::Start => "shape=circle, style=filled, fillcolor=black, label=\"\", width=0.25".to_string(),
            NodeKind::Final => "shape=doublecircle, style=filled, fillcolor=black, label=\"\", width=0.2".to_string(),
            NodeKind::Fork | NodeKind::Join => {
                "shape=box, style=filled, fillcolor=black, label=\"\", height=0.06, width=1.6".to_string()
            }
            NodeKind::Merge | NodeKind::Decision(_) => format!("shape=diamond, label={}", q(id)),
            NodeKind::Activity(a) => {
                if let Ok(v) = a.binding.variant() {
                    lanes.entry(v).or_default().push(id);
                }
                continue;
            }
        };
        let _ = writeln!(out, "  {} [{attrs}];", q(id));
    }
    for (i, (variant, ids)) in lanes.iter().enumerate() {
        let _ = writeln!(out, "  subgraph cluster_{i} {{");
        let _ = writeln!(out, "    label={}; style=dashed;", q(lane_label(*variant)));
        for id in ids {
            let a = g.node(id).unwrap().as_activity().unwrap();
            let mut label = id.to_string();
            match (&a.binding.program, &a.binding.actuator) {
                (Some(p), Some(r)) => label.push_str(&format!("\\n{p} @ {r}")),
                (Some(p), None) => label.push_str(&format!("\\n{p}")),
                _ => {
                    let caps: Vec<&str> = a.binding.capabilities.iter().map(String::as_str).collect();
                    label.push_str(&format!("\\n[{}]", caps.join(", ")));
                }
            }
            let _ = writeln!(out, "    {} [shape=box, style=rounded, label=\"{}\"];", q(id), label.replace('"', "\\\""));
        }
        out.push_str("  }\n");
    }
    for id in g.topo_order() {
        let node = g.node(id).unwrap();
        if let Some(d) = node.as_decision() {
            for (guard, t) in &d.branches {
                let _ = writeln!(out, "  {} -> {} [label={}];", q(id), q(t), q(&format!("[{guard}]")));
            }
            let _ = writeln!(out, "  {} -> {} [label=\"[else]\"];", q(id), q(&d.otherwise));
        } else {
            for s in g.successors(id) {
                let _ = writeln!(out, "  {} -> {};", q(id), q(s));
            }
        }
    }
    for f in g.object_flows() {
        let _ = writeln!(
            out,
            "  {} -> {} [style=dashed, arrowhead=open, constraint=false, label={}];",
            q(&f.producer),
            q(&f.consumer),
            q(&f.slot)
        );
    }
    out.push_str("}\n");
    out
}
