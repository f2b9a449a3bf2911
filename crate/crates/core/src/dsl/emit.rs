use std::fmt::Write as _;

use crate::quantities::Unit;
use crate::workflow::{is_ident, NodeKind, WorkflowGraph};

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn name(s: &str) -> String {
    if is_ident(s) {
        s.to_string()
    } else {
        quote(s)
    }
}

fn list(items: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    let v: Vec<String> = items.into_iter().map(|s| name(s.as_ref())).collect();
    format!("[{}]", v.join(", "))
}

/// Prints a graph as workflow source. Declarations follow topological
/// order (ties by id), then the control edges in the same order.
pub fn emit_dsl(g: &WorkflowGraph) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "workflow {} {{", quote(g.name()));
    for r in g.source_refs() {
        let _ = writeln!(out, "  cite {};", quote(r));
    }
    let order = g.topo_order();
    let mut decls = String::new();
    for &id in &order {
        let node = g.node(id).unwrap();
        match &node.kind {
            NodeKind::Start if id != "start" => {
                let _ = writeln!(decls, "  initial {id};");
            }
            NodeKind::Final if id != "end" => {
                let _ = writeln!(decls, "  final {id};");
            }
            NodeKind::Start | NodeKind::Final => {}
            NodeKind::Fork => {
                let _ = writeln!(decls, "  fork {id};");
            }
            NodeKind::Join => {
                let _ = writeln!(decls, "  join {id};");
            }
            NodeKind::Merge => {
                let _ = writeln!(decls, "  merge {id};");
            }
            NodeKind::Decision(d) => {
                let _ = writeln!(decls, "  decision {id} {{");
                for (guard, target) in &d.branches {
                    let _ = write!(decls, "    when {} {} {:?}", name(&guard.observable), guard.op.symbol(), guard.literal);
                    if guard.unit != Unit::dimensionless() {
                        let _ = write!(decls, " {}", quote(guard.unit.name()));
                    }
                    let _ = writeln!(decls, " -> {target};");
                }
                let _ = writeln!(decls, "    else -> {};", d.otherwise);
                decls.push_str("  }\n");
            }
            NodeKind::Activity(a) => {
                let _ = writeln!(decls, "  activity {id} {{");
                if let Some(p) = &a.binding.program {
                    let _ = writeln!(decls, "    program: {};", quote(p));
                }
                if let Some(r) = &a.binding.actuator {
                    let _ = writeln!(decls, "    actuator: {};", quote(r));
                }
                if !a.binding.capabilities.is_empty() {
                    let _ = writeln!(decls, "    capabilities: {};", list(&a.binding.capabilities));
                }
                if !a.params.is_empty() {
                    decls.push_str("    params {");
                    for (k, v) in &a.params {
                        let _ = write!(decls, " {}: {};", name(k), quote(v));
                    }
                    decls.push_str(" }\n");
                }
                let flows: Vec<_> = g.flows_into(id).collect();
                if !flows.is_empty() {
                    decls.push_str("    inputs {\n");
                    for f in flows {
                        let _ = write!(decls, "      {} <- {} {{", f.slot, f.producer);
                        for (obs, unit) in f.spec.wanted() {
                            let _ = write!(decls, " {}: {};", name(obs), quote(unit.name()));
                        }
                        decls.push_str(" }\n");
                    }
                    decls.push_str("    }\n");
                }
                if !a.outputs.is_empty() {
                    let _ = writeln!(decls, "    outputs: {};", list(&a.outputs));
                }
                if let Some(c) = &a.cite {
                    let _ = writeln!(decls, "    cite: {};", quote(c));
                }
                decls.push_str("  }\n");
            }
        }
    }
    if !decls.is_empty() {
        out.push_str(&decls);
    }
    for &id in &order {
        if g.node(id).unwrap().as_decision().is_some() {
            continue;
        }
        for s in g.successors(id) {
            let _ = writeln!(out, "  {id} -> {s};");
        }
    }
    out.push_str("}\n");
    out
}
