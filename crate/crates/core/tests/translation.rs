mod support;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use gridflow::dsl::{interpret, job_dependencies, parse, to_functional_plan, to_job_xml, validate_job_xml, JobXmlOptions};
use gridflow::engine::{plan, Affiliation, Engine, ExecOptions, UserProfile};
use gridflow::resources::{JobBroker, JobService};
use gridflow::simgrid::{build_case_study, testbed, SimulatedExecutor};
use gridflow::storage::Store;
use gridflow::workflow::{verify, WorkflowGraph};
use support::{arm_for, assignments, corpus, corpus_registry, reduction_oracle, steering_output, ScriptService};

fn parsed_corpus() -> Vec<(String, WorkflowGraph)> {
    corpus("sound")
        .into_iter()
        .chain(corpus("unsound"))
        .filter_map(|f| parse(&f.text).ok().map(|g| (f.name, g)))
        .chain([("case-study".to_string(), build_case_study())])
        .collect()
}

fn nonempty(m: BTreeMap<String, BTreeSet<String>>) -> BTreeMap<String, BTreeSet<String>> {
    m.into_iter().filter(|(_, v)| !v.is_empty()).collect()
}

#[test]
fn job_dependencies_are_the_transitive_reduction() {
    for (name, g) in parsed_corpus() {
        let oracle = reduction_oracle(&g);
        assert_eq!(job_dependencies(&g), oracle, "{name}");
        if verify(&g).is_sound() {
            let xml = to_job_xml(&g, JobXmlOptions::default()).unwrap();
            let seq = validate_job_xml(&xml).unwrap_or_else(|e| panic!("{name}: {e}\n{xml}"));
            assert_eq!(nonempty(seq.depends_on), nonempty(oracle), "{name}: job XML");
        }
    }
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

#[test]
fn interpreter_matches_engine_per_guard_assignment() {
    let user = UserProfile::new("ann", Affiliation::Academic);
    let registry = corpus_registry();
    let mut runs = 0;
    for f in corpus("sound") {
        let g = parse(&f.text).unwrap();
        assert!(g.decision_count() <= 6);
        let fplan = to_functional_plan(&g, 100).unwrap_or_else(|e| panic!("{}: {e}", f.name));
        for a in assignments(&g) {
            let arity: BTreeMap<String, usize> =
                g.nodes().filter_map(|n| n.as_decision().map(|d| (n.id.clone(), d.arity()))).collect();
            let expected = interpret(&fplan, &mut |d, visit| arm_for(&a, d, visit, arity[d])).unwrap();

            let dir = tempfile::tempdir().unwrap();
            let store = Arc::new(Store::open(dir.path()).unwrap());
            let (g2, a2) = (g.clone(), a.clone());
            let jobs = ScriptService::new(store.clone(), move |req, _| {
                Ok(steering_output(&g2, &a2, &req.activity, req.occurrence))
            });
            let p = plan(&g, &registry, &user, BTreeMap::new(), 100).unwrap();
            let record = Engine::new(store, jobs).execute(&p, &ExecOptions::default()).unwrap();
            let got: Vec<String> = record.completed_activities().into_iter().map(String::from).collect();
            assert_eq!(sorted(got), sorted(expected), "{} under {:?}", f.name, a);
            runs += 1;
        }
    }
    assert_eq!(runs, 11, "only {runs} assignments exercised");
}

#[test]
fn interpreter_matches_engine_on_case_study() {
    let g = build_case_study();
    let expected = interpret(&to_functional_plan(&g, 100).unwrap(), &mut |_, _| unreachable!()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(Store::open(dir.path()).unwrap());
    let registry = Arc::new(testbed());
    let jobs: Arc<dyn JobService> =
        Arc::new(JobBroker::new(registry.clone(), Box::new(SimulatedExecutor::new(store.clone(), 3))));
    let params = [("L", "50"), ("W", "10"), ("T", "12")].iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let p = plan(&g, &registry, &UserProfile::new("ann", Affiliation::Academic), params, 100).unwrap();
    let record = Engine::new(store, jobs).execute(&p, &ExecOptions::default()).unwrap();
    let got: Vec<&str> = record.completed_activities();
    assert_eq!(got, expected);
}
