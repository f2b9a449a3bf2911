use super::*;
use crate::workflow::{verify, Activity, Binding, GraphBuilder, Node, NodeKind, StructuralViolation};

const MINIMAL: &str = r#"workflow "w" { start -> A; activity A { program: "p"; capabilities: [x] } A -> end }"#;

const FORKED: &str = r#"
workflow "par" {
  activity A { program: "a" }
  activity B { program: "b" }
  activity C { program: "c" }
  fork F after start into (A, B);
  join J waits (A, B) -> C;
  C -> end;
}
"#;

const LOOPED: &str = r#"
workflow "loop" {
  cite "Doe, J. Chem. 1 (2000)";
  activity run { capabilities: [md]; params { nsteps: "200" } }
  activity check {
    capabilities: [analysis]
    inputs { traj <- run { msd: "Å^2", t: "ps" } }
    outputs: [msd_converged]
  }
  merge M waits (start, D) -> run;
  run -> check;
  decision D after check {
    when msd_converged == 1 -> end;
    else -> M;
  }
}
"#;

#[test]
fn minimal_parses_to_three_nodes() {
    let g = parse(MINIMAL).unwrap();
    assert_eq!(g.len(), 3);
    assert_eq!(g.start(), "start");
    assert!(verify(&g).is_sound());
}

#[test]
fn fork_join_block() {
    let g = parse(FORKED).unwrap();
    assert_eq!(g.len(), 7);
    assert_eq!(g.node("F").unwrap().kind, NodeKind::Fork);
    let g2 = parse(&FORKED.replace("  activity C { program: \"c\" }\n", "").replace("-> C;\n  C -> end", "-> end")).unwrap();
    assert_eq!(g2.len(), 6);
}

#[test]
fn missing_brace_reports_line() {
    let src = "workflow \"w\" {\n  start -> A;\n  activity A { program: \"p\"\n  A -> end;\n";
    match parse(src) {
        Err(DslError::Syntax { line, .. }) => assert_eq!(line, 4),
        other => panic!("{other:?}"),
    }
    match parse("workflow \"w\" {\n start -> end;\n") {
        Err(DslError::Syntax { line, expected, .. }) => {
            assert_eq!(line, 3);
            assert!(expected.contains("statement"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn semantic_errors() {
    assert!(matches!(parse(r#"workflow "w" { start -> X; X -> end }"#), Err(DslError::Semantic { line: 1, .. })));
    let dup = "workflow \"w\" {\n activity A { program: \"p\" }\n activity A { program: \"p\" }\n start -> A -> end }";
    assert!(matches!(parse(dup), Err(DslError::Semantic { line: 3, .. })));
    let bad = r#"workflow "w" { fork F after start into (end); }"#;
    match parse(bad) {
        Err(DslError::Graph(crate::workflow::WorkflowError::Structural(v))) => {
            assert!(v.iter().any(|x| matches!(x, StructuralViolation::BadDegree { node, .. } if node == "F")))
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn emit_round_trip() {
    for src in [MINIMAL, FORKED, LOOPED] {
        let g = parse(src).unwrap();
        let text = emit_dsl(&g);
        let g2 = parse(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert_eq!(g, g2);
        assert_eq!(emit_dsl(&g2), text);
    }
}

#[test]
fn emission_independent_of_construction_order() {
    let build = |rev: bool| {
        let mut nodes = vec![
            Node::start("start"),
            Node::activity("A", Activity::new(Binding::program("a"))),
            Node::activity("B", Activity::new(Binding::free(&["md"])).param("k", "v")),
            Node::final_("end"),
        ];
        let mut edges = vec![("start", "A"), ("A", "B"), ("B", "end")];
        if rev {
            nodes.reverse();
            edges.reverse();
        }
        let mut b = GraphBuilder::new("w");
        for n in nodes {
            b = b.node(n);
        }
        for (x, y) in edges {
            b = b.edge(x, y);
        }
        emit_dsl(&b.build().unwrap())
    };
    assert_eq!(build(false), build(true));
}

#[test]
fn job_xml_chain_and_fork() {
    let chain = parse(
        r#"workflow "c" { activity A { program: "a" } activity B { program: "b" } activity C { program: "c" }
           start -> A -> B -> C -> end }"#,
    )
    .unwrap();
    let xml = to_job_xml(&chain, JobXmlOptions::default()).unwrap();
    let seq = validate_job_xml(&xml).unwrap();
    assert_eq!(seq.jobs, ["A", "B", "C"]);
    assert_eq!(seq.depends_on["B"].iter().collect::<Vec<_>>(), ["A"]);
    assert_eq!(seq.depends_on["C"].iter().collect::<Vec<_>>(), ["B"]);

    let seq = validate_job_xml(&to_job_xml(&parse(FORKED).unwrap(), JobXmlOptions::default()).unwrap()).unwrap();
    assert_eq!(seq.depends_on["C"].iter().collect::<Vec<_>>(), ["A", "B"]);
    assert!(seq.depends_on["A"].is_empty() && seq.depends_on["B"].is_empty());
}

#[test]
fn job_xml_refuses_unsound() {
    let src = r#"workflow "u" {
      activity A { program: "a" } activity B { program: "b" }
      decision D after start { when x > 0 -> A; else -> B }
      join J waits (A, B) -> end;
    }"#;
    let g = parse(src).unwrap();
    assert!(matches!(to_job_xml(&g, JobXmlOptions::default()), Err(DslError::UnsoundWorkflow(_))));
    let forced = to_job_xml(&g, JobXmlOptions { force: true, ..Default::default() }).unwrap();
    assert!(validate_job_xml(&forced).is_ok());
}

#[test]
fn job_xml_loops_are_wrapped() {
    let xml = to_job_xml(&parse(LOOPED).unwrap(), JobXmlOptions::default()).unwrap();
    assert!(xml.contains("<loop decision=\"D\" max=\"100\">"));
    let seq = validate_job_xml(&xml).unwrap();
    assert_eq!(seq.depends_on["check"].iter().collect::<Vec<_>>(), ["run"]);
    assert!(validate_job_xml("<workflow name=\"x\"><job id=\"a\"><depends-on job=\"b\"/></job></workflow>").is_err());
    assert!(validate_job_xml("<workflow><job id=\"a\"/></workflow>").is_err());
    assert!(validate_job_xml(
        "<workflow name=\"x\"><job id=\"a\"><depends-on job=\"b\"/></job><job id=\"b\"><depends-on job=\"a\"/></job></workflow>"
    )
    .is_err());
}

#[test]
fn plan_base_cases() {
    let p = to_functional_plan(&parse(MINIMAL).unwrap(), 100).unwrap();
    assert_eq!(p, PlanExpr::Seq(vec![PlanExpr::Run("A".into())]));
    let p = to_functional_plan(&parse(FORKED).unwrap(), 100).unwrap();
    assert_eq!(
        p,
        PlanExpr::Seq(vec![
            PlanExpr::Par {
                fork: "F".into(),
                branches: vec![PlanExpr::Run("A".into()), PlanExpr::Run("B".into())],
                join: "J".into()
            },
            PlanExpr::Run("C".into()),
        ])
    );
}

#[test]
fn plan_loop_and_interpreter() {
    let p = to_functional_plan(&parse(LOOPED).unwrap(), 100).unwrap();
    match &p {
        PlanExpr::Seq(items) => assert!(matches!(&items[..], [PlanExpr::Loop { continue_arm: 1, .. }])),
        other => panic!("{other:?}"),
    }
    // Not converged twice, then converged: the body runs three times.
    let trace = interpret(&p, &mut |_, visit| if visit < 2 { 1 } else { 0 }).unwrap();
    assert_eq!(trace, ["run", "check", "run", "check", "run", "check"]);
    let small = to_functional_plan(&parse(LOOPED).unwrap(), 2).unwrap();
    assert!(matches!(interpret(&small, &mut |_, _| 1), Err(DslError::IterationLimit(d)) if d == "D"));
}

#[test]
fn wheatstone_bridge_is_not_series_parallel() {
    let src = r#"workflow "bridge" {
      fork F1 after start into (F2, J1);
      fork F2 into (J1, J2);
      join J1 -> J2;
      join J2 -> end;
    }"#;
    let g = parse(src).unwrap();
    assert_eq!(g.len(), 6);
    assert!(verify(&g).is_sound());
    assert!(matches!(to_functional_plan(&g, 100), Err(DslError::NotSeriesParallel(_))));
}

#[test]
fn dot_output() {
    let g = parse(MINIMAL).unwrap();
    let dot = to_dot(&g);
    assert_eq!(dot.matches(" -> ").count(), 2);
    assert_eq!(dot.matches("cluster_").count(), 1);
    let mixed = parse(
        r#"workflow "m" { activity A { program: "a"; actuator: "a@h" } activity B { capabilities: [md] }
           start -> A -> B -> end }"#,
    )
    .unwrap();
    let dot = to_dot(&mixed);
    assert_eq!(dot.matches("subgraph cluster_").count(), 2);
    assert!(dot.contains("style=rounded"));
}
