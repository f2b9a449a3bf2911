use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::resources::LicenseKind;
use crate::storage::{ResultKey, RunStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CitationOrigin {
    Program { program: String },
    WorkflowSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub citation: String,
    pub origin: CitationOrigin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceUse {
    pub resource: String,
    pub program: String,
    pub version: String,
    pub calculator: String,
    pub license: LicenseKind,
    /// SHA-256 of the descriptor document.
    pub descriptor_hash: String,
}

/// Everything needed to reproduce and credit a run. Holds no run id and
/// no timestamps, so equal plans give equal records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub workflow: String,
    /// SHA-256 of the workflow's emitted source text.
    pub workflow_hash: String,
    pub user: String,
    /// Effective parameters per activity.
    pub parameters: BTreeMap<String, BTreeMap<String, String>>,
    pub max_iterations: u32,
    /// Activity id to the resource it was bound to.
    pub resources: BTreeMap<String, ResourceUse>,
    pub ledger: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Submitted,
    Completed,
    Reused,
    Failed,
    Fired,
    Resumed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    pub node: String,
    pub kind: TraceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityEntry {
    pub resource: String,
    /// Jobs started for this activity, across resumes.
    pub executions: u32,
    /// Occurrences satisfied from an earlier checkpoint.
    pub reused: u32,
    pub last_job: Option<String>,
    pub result: Option<ResultKey>,
    /// Unix milliseconds.
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub activity: String,
    pub seq: u32,
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: String,
    pub status: RunStatus,
    pub activities: BTreeMap<String, ActivityEntry>,
    pub trace: Vec<TraceEvent>,
    pub checkpoints: Vec<CheckpointEntry>,
    pub failure: Option<String>,
    pub provenance: ProvenanceRecord,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
}

impl RunRecord {
    /// Drops wall-clock times so records of equal runs compare equal.
    pub fn redact_timestamps(&mut self) {
        self.started_at = None;
        self.finished_at = None;
        for a in self.activities.values_mut() {
            a.started_at = None;
            a.finished_at = None;
        }
    }

    pub fn checkpoint_hashes(&self) -> Vec<&str> {
        self.checkpoints.iter().map(|c| c.hash.as_str()).collect()
    }

    pub fn executions(&self, activity: &str) -> u32 {
        self.activities.get(activity).map_or(0, |a| a.executions)
    }

    /// Activities in the order their jobs completed or were reused.
    pub fn completed_activities(&self) -> Vec<&str> {
        self.trace
            .iter()
            .filter(|e| matches!(e.kind, TraceKind::Completed | TraceKind::Reused))
            .map(|e| e.node.as_str())
            .collect()
    }

    /// Deterministic JSON document (keys in a fixed order).
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<RunRecord, serde_json::Error> {
        serde_json::from_str(text)
    }
}
