use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::template::{placeholders, Placeholder};
use super::ResourceError;
use crate::quantities::{is_token, ExtractionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LicenseKind {
    Open,
    Academic,
    Commercial,
}

impl LicenseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LicenseKind::Open => "open",
            LicenseKind::Academic => "academic",
            LicenseKind::Commercial => "commercial",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "open" => Some(LicenseKind::Open),
            "academic" => Some(LicenseKind::Academic),
            "commercial" => Some(LicenseKind::Commercial),
            _ => None,
        }
    }
}

impl fmt::Display for LicenseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct License {
    pub kind: LicenseKind,
    pub citation: String,
}

impl License {
    pub fn open() -> Self {
        License { kind: LicenseKind::Open, citation: String::new() }
    }

    pub fn new(kind: LicenseKind, citation: impl Into<String>) -> Self {
        License { kind, citation: citation.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Calculator {
    pub name: String,
    pub platform: String,
    pub max_jobs: u32,
}

/// One input of a launch template: where the staged dataset lands and
/// what the program expects to find in it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputSlot {
    pub name: String,
    /// File name under the job's work directory.
    pub file: String,
    pub expects: ExtractionSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchTemplate {
    pub command: String,
    pub inputs: Vec<InputSlot>,
    pub output: String,
    pub platform: String,
}

impl LaunchTemplate {
    pub fn slot(&self, name: &str) -> Option<&InputSlot> {
        self.inputs.iter().find(|s| s.name == name)
    }

    pub(crate) fn validate(&self) -> Result<(), ResourceError> {
        let invalid = |m: String| Err(ResourceError::InvalidDescriptor(m));
        let mut names = BTreeSet::new();
        let mut files = BTreeSet::new();
        for slot in &self.inputs {
            if !is_token(&slot.name) || slot.name == "workdir" || slot.name.starts_with("params.") {
                return invalid(format!("bad input slot name {:?}", slot.name));
            }
            if !names.insert(slot.name.as_str()) {
                return invalid(format!("duplicate input slot {:?}", slot.name));
            }
            if !is_token(&slot.file) || slot.file.contains('/') {
                return invalid(format!("bad staged file name {:?}", slot.file));
            }
            // Distinct slots must never share a staged file.
            if !files.insert(slot.file.as_str()) {
                return invalid(format!("staged file {:?} used by two slots", slot.file));
            }
        }
        if !is_token(&self.output) {
            return invalid(format!("bad output slot {:?}", self.output));
        }
        for p in placeholders(&self.command).map_err(ResourceError::InvalidDescriptor)? {
            match p {
                Placeholder::Workdir | Placeholder::Param(_) => {}
                Placeholder::Slot(name) if names.contains(name) => {}
                Placeholder::Slot(name) => {
                    return invalid(format!("template references undeclared ${{{name}}}"))
                }
            }
        }
        Ok(())
    }
}

/// A registered calculator + program pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceDescriptor {
    pub id: String,
    pub program: String,
    pub version: String,
    pub calculator: Calculator,
    pub capabilities: BTreeSet<String>,
    pub license: License,
    pub template: LaunchTemplate,
    pub cost_weight: f64,
}

impl ResourceDescriptor {
    pub fn validate(&self) -> Result<(), ResourceError> {
        let invalid = |m: String| Err(ResourceError::InvalidDescriptor(m));
        if !is_token(&self.id) {
            return invalid(format!("bad resource id {:?}", self.id));
        }
        if !is_token(&self.program) {
            return invalid(format!("{}: bad program name {:?}", self.id, self.program));
        }
        if self.calculator.max_jobs < 1 {
            return invalid(format!("{}: max concurrent jobs must be at least 1", self.id));
        }
        if self.capabilities.is_empty() {
            return invalid(format!("{}: capabilities must be nonempty", self.id));
        }
        if let Some(bad) = self.capabilities.iter().find(|c| !is_token(c)) {
            return invalid(format!("{}: bad capability {bad:?}", self.id));
        }
        if self.license.kind != LicenseKind::Open && self.license.citation.trim().is_empty() {
            return invalid(format!(
                "{}: {} license requires a citation",
                self.id, self.license.kind
            ));
        }
        if !(self.cost_weight.is_finite() && self.cost_weight >= 0.0) {
            return invalid(format!("{}: cost weight must be a nonnegative number", self.id));
        }
        self.template.validate()
    }

    pub fn program_label(&self) -> String {
        format!("{} {}", self.program, self.version)
    }
}

/// What an activity asks of the registry.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BindingRequirement {
    pub program: Option<String>,
    pub actuator: Option<String>,
    pub capabilities: BTreeSet<String>,
}

impl BindingRequirement {
    pub fn matches(&self, d: &ResourceDescriptor) -> bool {
        self.program.as_ref().is_none_or(|p| *p == d.program)
            && self.actuator.as_ref().is_none_or(|a| *a == d.id)
            && self.capabilities.is_subset(&d.capabilities)
    }
}
