//! Activity-diagram workflows: graph IR, swimlane bindings, guards and
//! logical-level verification.

mod graph;
mod verify;

pub use graph::{
    build_graph, is_ident, Activity, Binding, BindingVariant, CmpOp, Decision, Guard, GraphBuilder, Node,
    NodeKind, ObjectFlow, WorkflowGraph,
};
pub use verify::{
    structural_findings, verify, Finding, VerificationMode, VerificationReport, MAX_EXHAUSTIVE_DECISIONS,
    MAX_STATES,
};

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum StructuralViolation {
    NoStart,
    TwoStarts(Vec<String>),
    NoFinal,
    DuplicateNode(String),
    InvalidId(String),
    DanglingEdge(String, String),
    BadDegree { node: String, kind: &'static str, ins: usize, outs: usize },
    UnguardedDecisionEdge(String, String),
    DuplicateBranch(String, String),
    InvalidBinding(String, String),
    BadObjectFlow { producer: String, consumer: String },
    DuplicateSlot(String, String),
}

impl fmt::Display for StructuralViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use StructuralViolation::*;
        match self {
            NoStart => write!(f, "no start node"),
            TwoStarts(ids) => write!(f, "more than one start node: {}", ids.join(", ")),
            NoFinal => write!(f, "no final node"),
            DuplicateNode(id) => write!(f, "duplicate node {id:?}"),
            InvalidId(id) => write!(f, "invalid identifier {id:?}"),
            DanglingEdge(a, b) => write!(f, "edge {a} -> {b} names an unknown node"),
            BadDegree { node, kind, ins, outs } => {
                write!(f, "{kind} {node:?} has {ins} incoming and {outs} outgoing edges")
            }
            UnguardedDecisionEdge(a, b) => write!(f, "edge {a} -> {b} leaves a decision without a guard"),
            DuplicateBranch(a, b) => write!(f, "decision {a:?} branches to {b:?} twice"),
            InvalidBinding(id, why) => write!(f, "activity {id:?}: {why}"),
            BadObjectFlow { producer, consumer } => {
                write!(f, "object flow {producer} -> {consumer} must connect two activities")
            }
            DuplicateSlot(c, s) => write!(f, "input slot {s:?} of {c:?} is fed twice"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GuardError {
    #[error("guard observable {0:?} missing from the incoming dataset")]
    MissingObservable(String),
    #[error("guard observable {0:?} is not a scalar")]
    NotScalar(String),
    #[error("guard on {observable:?}: cannot compare {from} with {to}")]
    DimensionMismatch { observable: String, from: String, to: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorkflowError {
    #[error("structural errors: {}", join(.0))]
    Structural(Vec<StructuralViolation>),
    #[error("{0}")]
    Invalid(String),
}

fn join(v: &[StructuralViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[cfg(test)]
mod tests;
