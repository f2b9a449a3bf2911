use super::*;
use crate::quantities::{Dataset, ExtractionSpec, Observable};

fn act(p: &str) -> Activity {
    Activity::new(Binding::program(p))
}

fn chain3() -> WorkflowGraph {
    GraphBuilder::new("w")
        .node(Node::start("start"))
        .activity("A", act("p"))
        .node(Node::final_("end"))
        .chain(&["start", "A", "end"])
        .build()
        .unwrap()
}

fn gt(obs: &str, v: f64) -> Guard {
    Guard::new(obs, CmpOp::Gt, v, "1").unwrap()
}

fn structural(r: Result<WorkflowGraph, WorkflowError>) -> Vec<StructuralViolation> {
    match r {
        Err(WorkflowError::Structural(v)) => v,
        other => panic!("expected structural error, got {other:?}"),
    }
}

#[test]
fn minimal_chain() {
    let g = chain3();
    assert_eq!(g.len(), 3);
    assert!(verify(&g).is_sound());
    assert_eq!(verify(&g).mode, VerificationMode::Exhaustive);
}

#[test]
fn two_starts() {
    let v = structural(
        GraphBuilder::new("w")
            .node(Node::start("s1"))
            .node(Node::start("s2"))
            .node(Node::merge("m"))
            .node(Node::final_("end"))
            .chain(&["s1", "m", "end"])
            .edge("s2", "m")
            .build(),
    );
    assert!(matches!(v[..], [StructuralViolation::TwoStarts(_)]));
}

#[test]
fn fork_with_one_branch() {
    let v = structural(
        GraphBuilder::new("w")
            .node(Node::start("start"))
            .node(Node::fork("F"))
            .activity("A", act("p"))
            .node(Node::final_("end"))
            .chain(&["start", "F", "A", "end"])
            .build(),
    );
    assert!(v.iter().any(|x| matches!(x, StructuralViolation::BadDegree { node, .. } if node == "F")));
}

#[test]
fn dangling_edges_and_bindings() {
    let v = structural(
        GraphBuilder::new("w")
            .node(Node::start("start"))
            .activity("A", Activity::new(Binding::default()))
            .node(Node::final_("end"))
            .chain(&["start", "A", "end"])
            .edge("A", "ghost")
            .build(),
    );
    assert!(v.contains(&StructuralViolation::DanglingEdge("A".into(), "ghost".into())));
    assert!(v.iter().any(|x| matches!(x, StructuralViolation::InvalidBinding(..))));
}

#[test]
fn parallel_block_is_sound() {
    let g = GraphBuilder::new("w")
        .node(Node::start("start"))
        .node(Node::fork("F"))
        .activity("A", act("a"))
        .activity("B", act("b"))
        .node(Node::join("J"))
        .node(Node::final_("end"))
        .chain(&["start", "F", "A", "J", "end"])
        .chain(&["F", "B", "J"])
        .build()
        .unwrap();
    assert_eq!(verify(&g).findings, vec![]);
}

#[test]
fn decision_into_join_deadlocks() {
    let g = GraphBuilder::new("w")
        .node(Node::start("start"))
        .node(Node::decision("D", vec![(gt("x", 0.0), "A")], "B"))
        .activity("A", act("a"))
        .activity("B", act("b"))
        .node(Node::join("J"))
        .node(Node::final_("end"))
        .chain(&["start", "D"])
        .chain(&["A", "J", "end"])
        .chain(&["B", "J"])
        .build()
        .unwrap();
    let r = verify(&g);
    assert_eq!(r.findings, vec![Finding::JoinDeadlock("J".into())]);
}

#[test]
fn unguarded_cycle() {
    let g = GraphBuilder::new("w")
        .node(Node::start("start"))
        .node(Node::merge("M"))
        .activity("A", act("a"))
        .activity("B", act("b"))
        .node(Node::final_("end"))
        .node(Node::decision("D", vec![(gt("x", 0.0), "end")], "M"))
        .chain(&["start", "D"])
        .chain(&["M", "A", "B", "M"])
        .build();
    // M has a decision feeding it but A->B->M->A has none.
    let g = g.unwrap();
    let r = verify(&g);
    assert!(r.findings.contains(&Finding::UnguardedCycle(vec!["A".into(), "B".into(), "M".into()])));
    assert!(r.has("NoTermination"));
}

#[test]
fn guarded_loop_is_sound() {
    let g = GraphBuilder::new("w")
        .node(Node::start("start"))
        .node(Node::merge("M"))
        .activity("A", act("a"))
        .node(Node::decision("D", vec![(gt("x", 0.0), "M")], "end"))
        .node(Node::final_("end"))
        .chain(&["start", "M", "A", "D"])
        .build()
        .unwrap();
    assert!(verify(&g).is_sound());
    assert_eq!(g.back_edges().into_iter().collect::<Vec<_>>(), vec![("D".into(), "M".into())]);
    assert_eq!(g.topo_order(), vec!["start", "M", "A", "D", "end"]);
}

#[test]
fn fork_into_merge_is_unbalanced() {
    let g = GraphBuilder::new("w")
        .node(Node::start("start"))
        .node(Node::fork("F"))
        .activity("A", act("a"))
        .activity("B", act("b"))
        .node(Node::merge("M"))
        .node(Node::final_("end"))
        .chain(&["start", "F", "A", "M", "end"])
        .chain(&["F", "B", "M"])
        .build()
        .unwrap();
    assert!(verify(&g).has("UnbalancedForkJoin"));
}

#[test]
fn unreachable_and_unbound_flow() {
    let spec = ExtractionSpec::of(&[("x", "1")]).unwrap();
    let g = GraphBuilder::new("w")
        .node(Node::start("start"))
        .node(Node::decision("D", vec![(gt("x", 0.0), "A")], "B"))
        .activity("A", act("a"))
        .activity("B", act("b"))
        .node(Node::merge("M"))
        .node(Node::final_("end"))
        .chain(&["start", "D"])
        .chain(&["A", "M", "end"])
        .chain(&["B", "M"])
        .flow(ObjectFlow::new("A", "B", "in", spec))
        .build()
        .unwrap();
    let r = verify(&g);
    assert_eq!(r.findings, vec![Finding::UnboundObjectFlow { producer: "A".into(), consumer: "B".into() }]);
}

#[test]
fn guard_evaluation_converts_units() {
    let ds = Dataset::new().with(Observable::scalar("len", 5.0, "Å").unwrap()).unwrap();
    assert!(Guard::new("len", CmpOp::Lt, 0.6, "nm").unwrap().evaluate(&ds).unwrap());
    assert!(!Guard::new("len", CmpOp::Lt, 0.4, "nm").unwrap().evaluate(&ds).unwrap());
    assert!(matches!(
        Guard::new("len", CmpOp::Lt, 1.0, "s").unwrap().evaluate(&ds),
        Err(GuardError::DimensionMismatch { .. })
    ));
    assert!(matches!(gt("nope", 0.0).evaluate(&ds), Err(GuardError::MissingObservable(_))));
}

#[test]
fn requirements_in_topological_order() {
    let g = GraphBuilder::new("w")
        .node(Node::start("start"))
        .activity("z", Activity::new(Binding::pinned("bigmac", "bigmac@cluster1")))
        .activity("y", Activity::new(Binding::program("gulp")))
        .activity("x", Activity::new(Binding::free(&["md"])))
        .activity("w", Activity::new(Binding::free(&["analysis"])))
        .node(Node::final_("end"))
        .chain(&["start", "z", "y", "x", "w", "end"])
        .build()
        .unwrap();
    let reqs = g.binding_requirements();
    let ids: Vec<&str> = reqs.iter().map(|(a, _)| a.as_str()).collect();
    assert_eq!(ids, ["z", "y", "x", "w"]);
    assert_eq!(reqs[0].1.actuator.as_deref(), Some("bigmac@cluster1"));
    assert_eq!(reqs[2].1.program, None);
    assert_eq!(reqs[2].1.capabilities.len(), 1);
}

#[test]
fn verify_is_deterministic() {
    let g = chain3();
    assert_eq!(verify(&g), verify(&g.clone()));
}
