//! `gridflow`: author, verify, translate, run and inspect workflows on the
//! simulated grid.

mod config;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use gridflow::dsl::{parse, to_dot, to_functional_plan, to_job_xml, DslError, JobXmlOptions};
use gridflow::engine::{plan, Engine, EngineError, ExecOptions, UserProfile};
use gridflow::quantities::Dataset;
use gridflow::resources::{descriptor_to_xml, parse_descriptor, JobBroker, JobService, Registry, ResourceError};
use gridflow::simgrid::{app_for, build_case_study, testbed, SimError, SimulatedExecutor};
use gridflow::storage::{StorageError, Store};
use gridflow::workflow::{verify, VerificationMode, WorkflowGraph};

use config::Config;

const DEFAULT_MAX_ITERATIONS: u32 = 100;

#[derive(Parser)]
#[command(name = "gridflow", version, about = "Workflow orchestration over simulated grid resources")]
struct Cli {
    /// Store directory [env: GRIDFLOW_STORE] [default: ./.gridflow]
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Config file [default: ./gridflow.toml when present]
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Register a resource descriptor (XML) in the store.
    Register { file: PathBuf },
    /// List known resources: the built-in testbed plus registered ones.
    Resources {
        #[arg(long)]
        json: bool,
        /// Print the descriptor document of one resource.
        #[arg(long, value_name = "ID")]
        xml: Option<String>,
    },
    /// Check a workflow for soundness.
    Verify {
        file: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Translate a workflow to job XML, a functional plan or DOT.
    Export {
        file: PathBuf,
        #[arg(long, value_enum)]
        to: Target,
        /// Emit job XML even for unsound workflows.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        max_iterations: Option<u32>,
    },
    /// Plan and run a workflow file (or `@case-study`); prints the run id.
    Submit {
        workflow: String,
        /// NAME:academic or NAME:commercial
        #[arg(long)]
        user: Option<String>,
        /// Run parameter; `key=v` applies to every activity, `act.key=v` to one.
        #[arg(long = "param", value_name = "K=V", num_args = 1..)]
        params: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Fail the N-th execution of activity ACT (1-based).
        #[arg(long = "fail-at", value_name = "ACT:N")]
        fail_at: Vec<String>,
        #[arg(long)]
        max_iterations: Option<u32>,
        /// Stop after this many checkpoints, as if the process died.
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Continue a failed or interrupted run from its checkpoints.
    Resume {
        run: String,
        #[arg(long = "fail-at", value_name = "ACT:N")]
        fail_at: Vec<String>,
        #[arg(long, hide = true)]
        stop_after: Option<usize>,
    },
    /// Show a run's record: executions, results, provenance.
    Report {
        run: String,
        /// Omit wall-clock timestamps.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        json: bool,
    },
    /// Inspect or repair the store.
    Store {
        #[command(subcommand)]
        cmd: StoreCommand,
    },
    /// Run one mock application standalone and print its native output.
    Mock {
        /// izafetch, bigmac, gulp, dlpoly, msdtool or echo
        name: String,
        #[arg(long = "param", value_name = "K=V", num_args = 1..)]
        params: Vec<String>,
        /// Input dataset in canonical form.
        #[arg(long = "input", value_name = "SLOT=FILE")]
        inputs: Vec<String>,
        /// Print the adapted dataset instead of the native output.
        #[arg(long)]
        adapted: bool,
    },
}

#[derive(Subcommand)]
enum StoreCommand {
    /// List runs, or the results of one run.
    Ls {
        run: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Undo the latest checkpoint of an activity.
    Rollback { run: String, activity: String },
    /// Re-hash every blob and report mismatches.
    Audit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Xml,
    Plan,
    Dot,
}

/// A diagnostic plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn user(message: impl Into<String>) -> Self {
        Failure { code: 1, message: message.into() }
    }
    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
    fn internal(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }
}

impl From<DslError> for Failure {
    fn from(e: DslError) -> Self {
        Failure::user(e.to_string())
    }
}

impl From<StorageError> for Failure {
    fn from(e: StorageError) -> Self {
        match e {
            StorageError::UnknownRun(_) | StorageError::UnknownCheckpoint { .. } | StorageError::InvalidName(_) => {
                Failure::user(e.to_string())
            }
            StorageError::Integrity { .. } | StorageError::StorageFull { .. } | StorageError::UnknownKey(_) => {
                Failure::runtime(e.to_string())
            }
            _ => Failure::internal(e.to_string()),
        }
    }
}

impl From<ResourceError> for Failure {
    fn from(e: ResourceError) -> Self {
        match e {
            ResourceError::DuplicateResource(_) | ResourceError::InvalidDescriptor(_) => Failure::user(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::BadParams(_) | SimError::MissingInput(_) => Failure::user(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Storage(s) => s.into(),
            EngineError::Resource(r) => r.into(),
            EngineError::Dsl(d) => d.into(),
            EngineError::RunFailed { .. } | EngineError::Quantity(_) => Failure::runtime(e.to_string()),
            EngineError::Manifest(_) => Failure::internal(e.to_string()),
            _ => Failure::user(e.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

struct Context {
    cfg: Config,
    store_path: PathBuf,
}

impl Context {
    fn new(cli: &Cli) -> Result<Context, Failure> {
        let cfg = Config::load(cli.config.as_deref()).map_err(Failure::user)?;
        let store_path = cli
            .store
            .clone()
            .or_else(|| std::env::var_os("GRIDFLOW_STORE").map(PathBuf::from))
            .or_else(|| cfg.store.path.clone())
            .unwrap_or_else(|| PathBuf::from(".gridflow"));
        Ok(Context { cfg, store_path })
    }

    fn store(&self) -> Result<Arc<Store>, Failure> {
        Ok(Arc::new(Store::open(&self.store_path)?))
    }

    fn resource_dir(&self) -> PathBuf {
        self.store_path.join("resources")
    }

    /// The testbed plus every descriptor registered in the store.
    fn registry(&self) -> Result<Registry, Failure> {
        let registry = testbed();
        let dir = self.resource_dir();
        if dir.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Failure::internal(format!("{}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "xml"))
                .collect();
            files.sort();
            for f in files {
                let text = read(&f)?;
                registry.register(parse_descriptor(&text).map_err(|e| Failure::user(format!("{}: {e}", f.display())))?)?;
            }
        }
        Ok(registry)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::user(format!("{}: {e}", path.display())))
}

fn load_workflow(spec: &str) -> Result<WorkflowGraph, Failure> {
    if spec == "@case-study" {
        return Ok(build_case_study());
    }
    let path = Path::new(spec);
    parse(&read(path)?).map_err(|e| Failure::user(format!("{}: {e}", path.display())))
}

fn key_values(pairs: &[String]) -> Result<BTreeMap<String, String>, Failure> {
    pairs
        .iter()
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| Failure::user(format!("expected K=V, got {kv:?}")))?;
            Ok((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn fault(spec: &str) -> Result<(String, u32), Failure> {
    let bad = || Failure::user(format!("expected ACT:N with N >= 1, got {spec:?}"));
    let (act, n) = spec.rsplit_once(':').ok_or_else(bad)?;
    let n: u32 = n.parse().map_err(|_| bad())?;
    if n == 0 || act.is_empty() {
        return Err(bad());
    }
    Ok((act.to_string(), n))
}

fn executor(store: &Arc<Store>, seed: u64, faults: &[String]) -> Result<SimulatedExecutor, Failure> {
    let mut exec = SimulatedExecutor::new(store.clone(), seed);
    for f in faults {
        let (act, n) = fault(f)?;
        exec = exec.fail_at(&act, n);
    }
    Ok(exec)
}

fn json_out(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("JSON value"));
}

fn run(cli: Cli) -> CliResult {
    let ctx = Context::new(&cli)?;
    match cli.cmd {
        Command::Register { file } => {
            let d = parse_descriptor(&read(&file)?).map_err(|e| Failure::user(format!("{}: {e}", file.display())))?;
            let registry = ctx.registry()?;
            let id = d.id.clone();
            registry.register(d)?;
            let dir = ctx.resource_dir();
            std::fs::create_dir_all(&dir).map_err(|e| Failure::internal(format!("{}: {e}", dir.display())))?;
            let target = dir.join(format!("{id}.xml"));
            std::fs::write(&target, read(&file)?).map_err(|e| Failure::internal(format!("{}: {e}", target.display())))?;
            println!("{id}");
        }
        Command::Resources { json, xml } => {
            let registry = ctx.registry()?;
            if let Some(id) = xml {
                let d = registry.get(&id).ok_or_else(|| Failure::user(format!("unknown resource {id:?}")))?;
                print!("{}", descriptor_to_xml(&d));
                return Ok(());
            }
            let mut all = registry.descriptors();
            all.sort_by(|a, b| a.id.cmp(&b.id));
            if json {
                let list = all
                    .iter()
                    .map(|d| {
                        serde_json::json!({
                            "id": d.id, "program": d.program, "version": d.version,
                            "capabilities": d.capabilities, "license": d.license.kind, "cost": d.cost_weight,
                        })
                    })
                    .collect();
                json_out(&serde_json::Value::Array(list));
            } else {
                for d in all {
                    let caps: Vec<&str> = d.capabilities.iter().map(String::as_str).collect();
                    println!("{:<20} {:<16} {:<9} cost={} [{}]", d.id, d.program_label(), d.license.kind, d.cost_weight, caps.join(", "));
                }
            }
        }
        Command::Verify { file, json } => {
            let g = load_workflow(&file.to_string_lossy())?;
            let report = verify(&g);
            if json {
                let findings: Vec<serde_json::Value> = report
                    .findings
                    .iter()
                    .map(|f| serde_json::json!({ "kind": f.kind(), "subject": f.subject() }))
                    .collect();
                let mode = match report.mode {
                    VerificationMode::Exhaustive => "exhaustive",
                    VerificationMode::StructuralOnly => "structural-only",
                };
                json_out(&serde_json::json!({
                    "workflow": g.name(), "sound": report.is_sound(), "mode": mode,
                    "states": report.states, "findings": findings,
                }));
            } else if report.is_sound() {
                println!("sound");
            } else {
                for f in &report.findings {
                    println!("{f}");
                }
            }
            if report.mode == VerificationMode::StructuralOnly {
                eprintln!("note: state space too large; only structural checks were run");
            }
            if !report.is_sound() {
                return Err(Failure::user(format!("{} finding(s)", report.findings.len())));
            }
        }
        Command::Export { file, to, force, max_iterations } => {
            let g = load_workflow(&file.to_string_lossy())?;
            let max = max_iterations.or(ctx.cfg.run.max_iterations).unwrap_or(DEFAULT_MAX_ITERATIONS);
            let out = match to {
                Target::Xml => to_job_xml(&g, JobXmlOptions { force, max_iterations: max })?,
                Target::Plan => format!("{}\n", to_functional_plan(&g, max)?),
                Target::Dot => to_dot(&g),
            };
            print!("{out}");
        }
        Command::Submit { workflow, user, params, seed, fail_at, max_iterations, stop_after } => {
            let g = load_workflow(&workflow)?;
            let user = user
                .or_else(|| ctx.cfg.run.user.clone())
                .ok_or_else(|| Failure::user("missing --user NAME:academic|commercial"))?;
            let user: UserProfile = user.parse().map_err(Failure::user)?;
            let mut all = ctx.cfg.params();
            all.extend(key_values(&params)?);
            let seed = seed.or(ctx.cfg.run.seed).unwrap_or(0);
            let max = max_iterations.or(ctx.cfg.run.max_iterations).unwrap_or(DEFAULT_MAX_ITERATIONS);
            let store = ctx.store()?;
            let registry = Arc::new(ctx.registry()?);
            let plan = plan(&g, &registry, &user, all, max)?;
            let broker: Arc<dyn JobService> =
                Arc::new(JobBroker::new(registry, Box::new(executor(&store, seed, &fail_at)?)));
            let opts = ExecOptions {
                stop_after_checkpoints: stop_after,
                context: BTreeMap::from([("seed".to_string(), seed.to_string())]),
            };
            finish(Engine::new(store, broker).execute(&plan, &opts))?;
        }
        Command::Resume { run, fail_at, stop_after } => {
            let store = ctx.store()?;
            let probe = Engine::new(store.clone(), Arc::new(gridflow::storage::StorageService::new(store.clone())));
            let manifest = probe.manifest(&run)?;
            let seed = match manifest.context.get("seed") {
                Some(s) => s.parse().map_err(|_| Failure::internal(format!("bad seed {s:?} in manifest")))?,
                None => 0,
            };
            let registry = Registry::new();
            for d in manifest.to_plan()?.descriptors.values() {
                registry.register(d.as_ref().clone())?;
            }
            let broker: Arc<dyn JobService> =
                Arc::new(JobBroker::new(Arc::new(registry), Box::new(executor(&store, seed, &fail_at)?)));
            let opts = ExecOptions { stop_after_checkpoints: stop_after, context: manifest.context.clone() };
            finish(Engine::new(store, broker).resume(&run, &opts))?;
        }
        Command::Report { run, deterministic, json } => {
            let store = ctx.store()?;
            let engine = Engine::new(store.clone(), Arc::new(gridflow::storage::StorageService::new(store.clone())));
            let mut record = engine.record(&run)?;
            if deterministic {
                record.redact_timestamps();
            }
            if json {
                print!("{}", record.to_json());
            } else {
                print!("{}", report::render(&record, &store)?);
            }
        }
        Command::Store { cmd } => {
            let store = ctx.store()?;
            match cmd {
                StoreCommand::Ls { run: None, json } => {
                    let runs: Vec<(String, String)> = store
                        .runs()
                        .into_iter()
                        .map(|r| {
                            let status = store.run_state(&r).map(|s| s.status.as_str()).unwrap_or("unknown");
                            (r, status.to_string())
                        })
                        .collect();
                    if json {
                        json_out(&serde_json::json!(runs
                            .iter()
                            .map(|(r, s)| serde_json::json!({"run": r, "status": s}))
                            .collect::<Vec<_>>()));
                    } else {
                        for (r, s) in runs {
                            println!("{r} {s}");
                        }
                    }
                }
                StoreCommand::Ls { run: Some(run), json } => {
                    let state = store.run_state(&run)?;
                    let keys = store.keys_of(&run)?;
                    if json {
                        json_out(&serde_json::json!({ "run": state, "keys": keys }));
                    } else {
                        println!("{} {}", state.run, state.status.as_str());
                        for k in keys {
                            let mark = if state.checkpoints.iter().any(|c| c.key == k) { " checkpoint" } else { "" };
                            println!("{:>4} {:<24} {}{mark}", k.seq, k.activity, k.hash);
                        }
                    }
                }
                StoreCommand::Rollback { run, activity } => {
                    let state = store.rollback(&run, &activity)?;
                    println!("{} {} checkpoint(s) left", state.run, state.checkpoints.len());
                }
                StoreCommand::Audit => {
                    let bad = store.audit()?;
                    for b in &bad {
                        println!("corrupt {b}");
                    }
                    if !bad.is_empty() {
                        return Err(Failure::runtime(format!("{} corrupt blob(s)", bad.len())));
                    }
                    println!("ok");
                }
            }
        }
        Command::Mock { name, params, inputs, adapted } => {
            let app = app_for(&name).ok_or_else(|| Failure::user(format!("unknown mock {name:?}")))?;
            let mut data = BTreeMap::new();
            for (slot, file) in key_values(&inputs)? {
                let ds = Dataset::from_canonical_bytes(read(Path::new(&file))?.as_bytes())
                    .map_err(|e| Failure::user(format!("{file}: {e}")))?;
                data.insert(slot, ds);
            }
            let native = app.run(&data, &key_values(&params)?)?;
            if adapted {
                print!("{}", app.adapt(&native)?.to_canonical_string());
            } else {
                print!("{native}");
            }
        }
    }
    Ok(())
}

/// Prints the run id; a run that started but failed still prints its id so
/// it can be resumed.
fn finish(result: Result<gridflow::engine::RunRecord, EngineError>) -> CliResult {
    match result {
        Ok(record) => {
            println!("{}", record.run);
            Ok(())
        }
        Err(EngineError::RunFailed { run, failure }) => {
            println!("{run}");
            Err(Failure::runtime(format!("run {run} failed: {failure}")))
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => {
            eprintln!("error: internal failure");
            ExitCode::from(Failure::internal("").code)
        }
    }
}
