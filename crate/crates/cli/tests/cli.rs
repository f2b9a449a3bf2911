use std::path::{Path, PathBuf};
use std::process::Command;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn gridflow(store: &Path, args: &[&str]) -> Out {
    let out = Command::new(env!("CARGO_BIN_EXE_gridflow"))
        .args(args)
        .env("GRIDFLOW_STORE", store)
        .current_dir(store.parent().unwrap())
        .output()
        .unwrap();
    Out {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn corpus(path: &str) -> String {
    root().join("workflows/corpus").join(path).to_string_lossy().into_owned()
}

const SMALL: [&str; 6] = ["--param", "L=80", "--param", "W=16", "--param", "T=14"];

fn submit(store: &Path, extra: &[&str]) -> Out {
    let mut args = vec!["submit", "@case-study", "--user", "ann:academic"];
    args.extend(SMALL);
    args.extend(extra);
    gridflow(store, &args)
}

fn tmp() -> (tempfile::TempDir, PathBuf) {
    let d = tempfile::tempdir().unwrap();
    let s = d.path().join("store");
    (d, s)
}

#[test]
fn every_subcommand_has_help() {
    let (_d, s) = tmp();
    for sub in ["register", "resources", "verify", "export", "submit", "resume", "report", "store", "mock"] {
        let o = gridflow(&s, &[sub, "--help"]);
        assert_eq!(o.code, 0, "{sub}");
        assert!(o.stdout.contains("Usage"), "{sub}");
    }
    assert_eq!(gridflow(&s, &["--bogus"]).code, 1);
    assert_eq!(gridflow(&s, &[]).code, 1);
}

#[test]
fn verify_exit_codes() {
    let (_d, s) = tmp();
    let o = gridflow(&s, &["verify", &corpus("sound/parallel.dsl")]);
    assert_eq!((o.code, o.stdout.as_str()), (0, "sound\n"));
    let o = gridflow(&s, &["verify", &corpus("unsound/dangling-join.dsl")]);
    assert_eq!(o.code, 1);
    assert!(o.stdout.contains("JoinDeadlock(J)"), "{}", o.stdout);
    let o = gridflow(&s, &["verify", "--json", &corpus("unsound/decision-into-join.dsl")]);
    assert_eq!(o.code, 1);
    let v: serde_json::Value = serde_json::from_str(&o.stdout).unwrap();
    assert_eq!(v["sound"], false);
    assert_eq!(v["mode"], "exhaustive");
    assert!(v["findings"].as_array().unwrap().iter().any(|f| f["kind"] == "JoinDeadlock"));
    let o = gridflow(&s, &["verify", &corpus("unsound/two-starts.dsl")]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("more than one start"), "{}", o.stderr);
    assert_eq!(gridflow(&s, &["verify", "/no/such/file.dsl"]).code, 1);
}

#[test]
fn export_is_byte_deterministic() {
    let (_d, s) = tmp();
    let wf = root().join("workflows/helium-zeolite.dsl");
    let wf = wf.to_str().unwrap();
    for to in ["xml", "plan", "dot"] {
        let a = gridflow(&s, &["export", wf, "--to", to]);
        let b = gridflow(&s, &["export", wf, "--to", to]);
        assert_eq!(a.code, 0, "{to}: {}", a.stderr);
        assert!(!a.stdout.is_empty());
        assert_eq!(a.stdout, b.stdout, "{to}");
    }
    let loop_xml = gridflow(&s, &["export", &corpus("sound/loop.dsl"), "--to", "xml", "--max-iterations", "7"]);
    assert!(loop_xml.stdout.contains("max=\"7\""), "{}", loop_xml.stdout);
    assert_eq!(gridflow(&s, &["export", &corpus("unsound/fork-into-merge.dsl"), "--to", "xml"]).code, 1);
    assert_eq!(gridflow(&s, &["export", &corpus("unsound/fork-into-merge.dsl"), "--to", "xml", "--force"]).code, 0);
    assert_eq!(gridflow(&s, &["export", wf, "--to", "pdf"]).code, 1);
}

fn report_json(store: &Path, run: &str) -> serde_json::Value {
    let o = gridflow(store, &["report", run, "--json", "--deterministic"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    serde_json::from_str(&o.stdout).unwrap()
}

#[test]
fn fail_then_resume() {
    let (_d, s) = tmp();
    let o = submit(&s, &["--seed", "3", "--fail-at", "md:1"]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    let run = o.stdout.trim().to_string();
    assert_eq!(run, "run-000001");
    assert!(o.stderr.contains("injected fault"), "{}", o.stderr);
    assert_eq!(report_json(&s, &run)["status"], "failed");

    let o = gridflow(&s, &["resume", &run]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(o.stdout.trim(), run);
    let r = report_json(&s, &run);
    assert_eq!(r["status"], "completed");
    for (a, runs, reused) in [("lattice", 1, 1), ("cbmc", 1, 1), ("gcmc", 1, 1), ("md", 2, 0), ("analysis", 1, 0)] {
        assert_eq!(r["activities"][a]["executions"], runs, "{a}");
        assert_eq!(r["activities"][a]["reused"], reused, "{a}");
    }
    let o = gridflow(&s, &["resume", &run]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("nothing to resume"), "{}", o.stderr);
    assert_eq!(gridflow(&s, &["resume", "run-999999"]).code, 1);
    assert_eq!(gridflow(&s, &["report", "run-999999"]).code, 1);
}

#[test]
fn user_errors_exit_one() {
    let (_d, s) = tmp();
    let o = gridflow(&s, &["submit", "@case-study", "--user", "bob:commercial"]);
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("license violation"), "{}", o.stderr);
    assert_eq!(gridflow(&s, &["submit", "@case-study"]).code, 1);
    assert_eq!(submit(&s, &["--param", "nosuch.L=3"]).code, 1);
    assert_eq!(submit(&s, &["--fail-at", "md:0"]).code, 1);
    assert_eq!(submit(&s, &["--param", "novalue"]).code, 1);
    assert_eq!(gridflow(&s, &["submit", &corpus("unsound/dangling-join.dsl"), "--user", "ann:academic"]).code, 1);
    assert_eq!(gridflow(&s, &["mock", "nosuch"]).code, 1);
    assert_eq!(gridflow(&s, &["store", "rollback", "run-000404", "md"]).code, 1);
}

#[test]
fn bad_simulation_parameters_fail_at_runtime() {
    let (_d, s) = tmp();
    let o = submit(&s, &["--param", "theta=2"]);
    assert_eq!(o.code, 2, "{}", o.stderr);
    assert_eq!(o.stdout.trim(), "run-000001");
}

#[test]
fn report_is_deterministic_across_equal_runs() {
    let (_d, s) = tmp();
    let a = submit(&s, &["--seed", "9"]).stdout.trim().to_string();
    let b = submit(&s, &["--seed", "9"]).stdout.trim().to_string();
    assert_ne!(a, b);
    let ra = gridflow(&s, &["report", &a, "--deterministic"]).stdout.replace(&a, "RUN");
    let rb = gridflow(&s, &["report", &b, "--deterministic"]).stdout.replace(&b, "RUN");
    assert_eq!(ra, rb);
    assert!(ra.contains("started   -"));
    assert!(ra.contains("analysis.D = "));
    let stamped = gridflow(&s, &["report", &a]).stdout;
    assert!(!stamped.contains("started   -"));
}

#[test]
fn register_and_list_resources() {
    let (_d, s) = tmp();
    let xml = root().join("resources/lammps@cluster3.xml");
    let o = gridflow(&s, &["register", xml.to_str().unwrap()]);
    assert_eq!((o.code, o.stdout.as_str()), (0, "lammps@cluster3\n"), "{}", o.stderr);
    assert_eq!(gridflow(&s, &["register", xml.to_str().unwrap()]).code, 1);
    let list: serde_json::Value = serde_json::from_str(&gridflow(&s, &["resources", "--json"]).stdout).unwrap();
    let ids: Vec<&str> = list.as_array().unwrap().iter().map(|d| d["id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"lammps@cluster3") && ids.contains(&"dlpoly@cluster2"));
    let o = gridflow(&s, &["resources", "--xml", "lammps@cluster3"]);
    assert!(o.stdout.contains("<resource id=\"lammps@cluster3\""), "{}", o.stdout);
    assert!(gridflow(&s, &["resources"]).stdout.contains("lammps@cluster3"));
}

#[test]
fn store_commands_and_audit() {
    let (_d, s) = tmp();
    let run = submit(&s, &["--seed", "1"]).stdout.trim().to_string();
    let ls = gridflow(&s, &["store", "ls"]);
    assert_eq!(ls.stdout, format!("{run} completed\n"));
    let keys: serde_json::Value = serde_json::from_str(&gridflow(&s, &["store", "ls", &run, "--json"]).stdout).unwrap();
    assert_eq!(keys["run"]["checkpoints"].as_array().unwrap().len(), 5);
    assert_eq!(gridflow(&s, &["store", "audit"]).stdout, "ok\n");

    let o = gridflow(&s, &["store", "rollback", &run, "gcmc"]);
    assert_eq!(o.code, 0);
    assert!(o.stdout.contains("3 checkpoint(s) left"));
    let o = gridflow(&s, &["resume", &run]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let r = report_json(&s, &run);
    assert_eq!(r["activities"]["gcmc"]["executions"], 1);
    assert_eq!(r["activities"]["md"]["executions"], 2);

    let blob = std::fs::read_dir(s.join("store")).unwrap().next().unwrap().unwrap().path();
    let mut bytes = std::fs::read(&blob).unwrap();
    bytes[0] ^= 0x20;
    std::fs::write(&blob, bytes).unwrap();
    let o = gridflow(&s, &["store", "audit"]);
    assert_eq!(o.code, 2);
    assert!(o.stdout.starts_with("corrupt "));
}

#[test]
fn mock_runs_standalone() {
    let (d, s) = tmp();
    let o = gridflow(&s, &["mock", "izafetch", "--param", "L=3"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert!(o.stdout.starts_with("# izafetch"), "{}", o.stdout);
    assert_eq!(o.stdout.lines().filter(|l| l.starts_with(char::is_numeric)).count(), 3);
    let adapted = gridflow(&s, &["mock", "izafetch", "--param", "L=3", "--adapted"]);
    let lattice = d.path().join("lattice.gfd");
    std::fs::write(&lattice, &adapted.stdout).unwrap();
    let o = gridflow(&s, &["mock", "bigmac", "--param", "theta=0.5", "--input", &format!("lattice={}", lattice.display())]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(gridflow(&s, &["mock", "bigmac", "--param", "theta=0.5"]).code, 1);
}

#[test]
fn config_file_supplies_defaults() {
    let (d, s) = tmp();
    std::fs::write(
        d.path().join("gridflow.toml"),
        "[run]\nuser = \"cfg:academic\"\nseed = 5\n\n[params]\nL = \"60\"\nW = \"8\"\nT = \"12\"\n",
    )
    .unwrap();
    let o = gridflow(&s, &["submit", "@case-study"]);
    assert_eq!(o.code, 0, "{}", o.stderr);
    let r = report_json(&s, o.stdout.trim());
    assert_eq!(r["provenance"]["user"], "cfg:academic");
    assert_eq!(r["provenance"]["parameters"]["md"]["T"], "12");
    std::fs::write(d.path().join("gridflow.toml"), "[run]\nbogus = 1\n").unwrap();
    assert_eq!(gridflow(&s, &["verify", &corpus("sound/chain.dsl")]).code, 1);
}
