//! Workflow execution: binding resolution, license gating, data routing
//! through the store, checkpoints, resume and provenance.

mod planning;
mod record;
mod run;

pub use planning::{license_allows, plan, Affiliation, ExecutionPlan, UserProfile};
pub use record::{
    ActivityEntry, CheckpointEntry, CitationOrigin, LedgerEntry, ProvenanceRecord, ResourceUse, RunRecord,
    TraceEvent, TraceKind,
};
pub use run::{Engine, ExecOptions, Manifest};

use crate::dsl::DslError;
use crate::quantities::QuantityError;
use crate::resources::{LicenseKind, ResourceError};
use crate::storage::StorageError;
use crate::workflow::Finding;

/// Why a started run stopped short of completion.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunFailure {
    #[error("activity {activity:?} failed: {reason}")]
    ActivityFailed { activity: String, reason: String },
    #[error("iteration limit reached at decision {0:?}")]
    IterationLimit(String),
    #[error("guard of decision {decision:?} could not be evaluated: {reason}")]
    GuardEvaluation { decision: String, reason: String },
    #[error("no enabled node and no running job; tokens stuck at {0}")]
    Deadlock(String),
    #[error("final node {0:?} reached while other tokens were live")]
    ResidualTokens(String),
    #[error("a second token arrived on edge {0}")]
    UnsafeMarking(String),
    #[error("stopped after {0} checkpoints")]
    Interrupted(usize),
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("workflow is unsound: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(", "))]
    Unsound(Vec<Finding>),
    #[error("no resource for activity {activity:?}: {reason}")]
    NoResource { activity: String, reason: String },
    #[error("license violation: activity {activity:?} would run {program:?}, which has a {kind}-only license")]
    LicenseViolation { activity: String, program: String, kind: LicenseKind },
    #[error("bad parameter {0:?}")]
    BadParam(String),
    #[error("unknown run {0:?}")]
    UnknownRun(String),
    #[error("run {0:?} already completed; nothing to resume")]
    NothingToResume(String),
    #[error("run {run} failed: {failure}")]
    RunFailed { run: String, failure: RunFailure },
    #[error("corrupt run manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Resource(#[from] ResourceError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Quantity(#[from] QuantityError),
}

impl EngineError {
    pub fn failure(&self) -> Option<&RunFailure> {
        match self {
            EngineError::RunFailed { failure, .. } => Some(failure),
            _ => None,
        }
    }
}
