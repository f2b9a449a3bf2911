use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::record::{CitationOrigin, LedgerEntry};
use super::EngineError;
use crate::resources::{LicenseKind, Registry, ResourceDescriptor};
use crate::workflow::{verify, WorkflowGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Affiliation {
    Academic,
    Commercial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: String,
    pub affiliation: Affiliation,
}

impl UserProfile {
    pub fn new(id: &str, affiliation: Affiliation) -> Self {
        UserProfile { id: id.into(), affiliation }
    }
}

impl FromStr for UserProfile {
    type Err = String;

    /// `name:academic` or `name:commercial`.
    fn from_str(s: &str) -> Result<Self, String> {
        let (id, kind) = s.split_once(':').ok_or_else(|| format!("expected NAME:academic|commercial, got {s:?}"))?;
        let affiliation = match kind {
            "academic" => Affiliation::Academic,
            "commercial" => Affiliation::Commercial,
            other => return Err(format!("unknown affiliation {other:?}")),
        };
        if id.is_empty() {
            return Err("empty user name".into());
        }
        Ok(UserProfile::new(id, affiliation))
    }
}

impl fmt::Display for UserProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.affiliation {
            Affiliation::Academic => "academic",
            Affiliation::Commercial => "commercial",
        };
        write!(f, "{}:{kind}", self.id)
    }
}

/// Academic licenses exclude commercial users; everything else is allowed.
pub fn license_allows(kind: LicenseKind, user: Affiliation) -> bool {
    !(kind == LicenseKind::Academic && user == Affiliation::Commercial)
}

#[derive(Debug, Clone)]
pub struct ExecutionPlan {
    pub graph: WorkflowGraph,
    /// Activity id to resource id.
    pub bindings: BTreeMap<String, String>,
    pub descriptors: BTreeMap<String, Arc<ResourceDescriptor>>,
    /// Run parameters: `key` applies to every activity, `activity.key` to one.
    pub params: BTreeMap<String, String>,
    pub user: UserProfile,
    pub max_iterations: u32,
    pub ledger: Vec<LedgerEntry>,
}

impl ExecutionPlan {
    /// Graph parameters, overridden by run-wide ones, overridden by
    /// activity-scoped run parameters.
    pub fn activity_params(&self, activity: &str) -> BTreeMap<String, String> {
        let mut out = self.graph.node(activity).and_then(|n| n.as_activity()).map(|a| a.params.clone()).unwrap_or_default();
        for (k, v) in &self.params {
            if !k.contains('.') {
                out.insert(k.clone(), v.clone());
            }
        }
        let prefix = format!("{activity}.");
        for (k, v) in &self.params {
            if let Some(rest) = k.strip_prefix(&prefix) {
                out.insert(rest.to_string(), v.clone());
            }
        }
        out
    }

    pub fn descriptor_of(&self, activity: &str) -> Option<&Arc<ResourceDescriptor>> {
        self.bindings.get(activity).and_then(|r| self.descriptors.get(r))
    }
}

/// The citation ledger for a binding: workflow sources first (graph, then
/// activity citations), then each distinct non-open program citation, in
/// topological order.
pub(crate) fn build_ledger(
    g: &WorkflowGraph,
    bindings: &BTreeMap<String, String>,
    descriptors: &BTreeMap<String, Arc<ResourceDescriptor>>,
) -> Vec<LedgerEntry> {
    let mut seen = BTreeSet::new();
    let mut ledger = Vec::new();
    let order = g.topo_order();
    let activity_cites = order.iter().filter_map(|id| g.node(id).and_then(|n| n.as_activity()).and_then(|a| a.cite.clone()));
    for r in g.source_refs().iter().cloned().chain(activity_cites) {
        if !r.trim().is_empty() && seen.insert(r.clone()) {
            ledger.push(LedgerEntry { citation: r, origin: CitationOrigin::WorkflowSource });
        }
    }
    for id in order {
        let Some(d) = bindings.get(id).and_then(|r| descriptors.get(r)) else { continue };
        if d.license.kind == LicenseKind::Open || d.license.citation.trim().is_empty() {
            continue;
        }
        if seen.insert(d.license.citation.clone()) {
            ledger.push(LedgerEntry {
                citation: d.license.citation.clone(),
                origin: CitationOrigin::Program { program: d.program.clone() },
            });
        }
    }
    ledger
}

/// Binds every activity to the first discovered resource that accepts its
/// input slots and whose license admits the user.
pub fn plan(
    g: &WorkflowGraph,
    registry: &Registry,
    user: &UserProfile,
    params: BTreeMap<String, String>,
    max_iterations: u32,
) -> Result<ExecutionPlan, EngineError> {
    let report = verify(g);
    if !report.is_sound() {
        return Err(EngineError::Unsound(report.findings));
    }
    for k in params.keys() {
        if let Some((act, rest)) = k.split_once('.') {
            if g.node(act).and_then(|n| n.as_activity()).is_none() || rest.is_empty() {
                return Err(EngineError::BadParam(k.clone()));
            }
        } else if k.is_empty() {
            return Err(EngineError::BadParam(k.clone()));
        }
    }
    let mut bindings = BTreeMap::new();
    let mut descriptors = BTreeMap::new();
    for (activity, req) in g.binding_requirements() {
        let candidates = registry.discover(&req);
        if candidates.is_empty() {
            return Err(EngineError::NoResource {
                activity,
                reason: "no registered resource satisfies the binding".into(),
            });
        }
        let slots: BTreeSet<&str> = g.flows_into(&activity).map(|f| f.slot.as_str()).collect();
        let fitting: Vec<Arc<ResourceDescriptor>> = candidates
            .iter()
            .filter_map(|id| registry.get(id))
            .filter(|d| d.template.inputs.iter().all(|s| slots.contains(s.name.as_str())))
            .collect();
        let Some(first) = fitting.first() else {
            return Err(EngineError::NoResource {
                activity,
                reason: format!("candidates {} need input slots the workflow does not feed", candidates.join(", ")),
            });
        };
        let chosen = match fitting.iter().find(|d| license_allows(d.license.kind, user.affiliation)) {
            Some(d) => d.clone(),
            None => {
                return Err(EngineError::LicenseViolation {
                    activity,
                    program: first.program.clone(),
                    kind: first.license.kind,
                })
            }
        };
        bindings.insert(activity, chosen.id.clone());
        descriptors.insert(chosen.id.clone(), chosen);
    }
    let ledger = build_ledger(g, &bindings, &descriptors);
    Ok(ExecutionPlan { graph: g.clone(), bindings, descriptors, params, user: user.clone(), max_iterations, ledger })
}
