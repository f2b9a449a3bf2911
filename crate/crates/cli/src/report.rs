use std::fmt::Write as _;

use gridflow::engine::{CitationOrigin, RunRecord};
use gridflow::storage::Store;

use crate::Failure;

/// Human-readable run report. Byte-stable once timestamps are redacted.
pub fn render(record: &RunRecord, store: &Store) -> Result<String, Failure> {
    let p = &record.provenance;
    let mut out = String::new();
    let stamp = |t: Option<u64>| t.map_or("-".to_string(), |v| v.to_string());
    let _ = writeln!(out, "run       {}", record.run);
    let _ = writeln!(out, "status    {}", record.status.as_str());
    let _ = writeln!(out, "workflow  {} (sha256 {})", p.workflow, p.workflow_hash);
    let _ = writeln!(out, "user      {}", p.user);
    let _ = writeln!(out, "started   {}", stamp(record.started_at));
    let _ = writeln!(out, "finished  {}", stamp(record.finished_at));
    if let Some(f) = &record.failure {
        let _ = writeln!(out, "failure   {f}");
    }
    let _ = writeln!(out, "\n{:<12} {:<20} {:<16} {:>5} {:>6}  result", "activity", "resource", "program", "runs", "reused");
    for (id, a) in &record.activities {
        let program = p.resources.get(id).map_or("-".to_string(), |r| format!("{} {}", r.program, r.version));
        let result = a.result.as_ref().map_or("-".to_string(), |k| k.to_string());
        let _ = writeln!(out, "{id:<12} {:<20} {program:<16} {:>5} {:>6}  {result}", a.resource, a.executions, a.reused);
    }
    let mut results = String::new();
    for (id, a) in &record.activities {
        let Some(key) = &a.result else { continue };
        let ds = store.get(key)?;
        for obs in ds.observables() {
            if let Some(v) = obs.as_scalar() {
                let _ = writeln!(results, "  {id}.{} = {v} {}", obs.name(), obs.unit().name());
            }
        }
        for (k, v) in ds.meta() {
            if k == "warning" {
                let _ = writeln!(results, "  {id} warning: {v}");
            }
        }
    }
    if !results.is_empty() {
        let _ = write!(out, "\nresults\n{results}");
    }
    let _ = writeln!(out, "\nparameters");
    for (act, params) in &p.parameters {
        let kv: Vec<String> = params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = writeln!(out, "  {act}: {}", kv.join(" "));
    }
    let _ = writeln!(out, "\ncitations");
    for e in &p.ledger {
        let origin = match &e.origin {
            CitationOrigin::Program { program } => program.as_str(),
            CitationOrigin::WorkflowSource => "workflow",
        };
        let _ = writeln!(out, "  [{origin}] {}", e.citation);
    }
    Ok(out)
}
