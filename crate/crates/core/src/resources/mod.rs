//! Fabric-layer virtualization of calculator + program pairs:
//! registration, discovery, launch rendering, job lifecycle and usage
//! accounting.

mod descriptor;
mod jobs;
mod registry;
mod template;
mod xml;

pub use descriptor::{
    BindingRequirement, Calculator, InputSlot, LaunchTemplate, License, LicenseKind, ResourceDescriptor,
};
pub use jobs::{
    Executor, JobBroker, JobHandle, JobId, JobRequest, JobService, JobStatus, JobTicket, StatusEvent,
    UsageRecord,
};
pub use registry::Registry;
pub use template::{render_launch, substitute, LaunchPlan, StagedInput};
pub use xml::{descriptor_to_xml, escape_xml, parse_descriptor};


#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResourceError {
    #[error("resource {0:?} is already registered")]
    DuplicateResource(String),
    #[error("invalid resource descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("unknown resource {0:?}")]
    UnknownResource(String),
    #[error("resource {0:?} has been withdrawn")]
    ResourceWithdrawn(String),
    #[error("unbound placeholder ${{{0}}}")]
    UnboundPlaceholder(String),
    #[error("missing input for slot {0:?}")]
    MissingInput(String),
    #[error("unknown job {0:?}")]
    UnknownJob(String),
    #[error("service stalled: {0}")]
    Stalled(String),
}
