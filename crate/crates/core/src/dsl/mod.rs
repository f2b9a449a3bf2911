//! Textual workflow language and its translations: job-sequence XML,
//! functional plans and DOT diagrams.
//!
//! ```text
//! workflow "w" {
//!   start -> A;
//!   activity A { program: "p"; capabilities: [x] }
//!   A -> end;
//! }
//! ```

mod dot;
mod emit;
mod jobxml;
mod lexer;
mod parser;
mod plan;

pub use dot::to_dot;
pub use emit::emit_dsl;
pub use jobxml::{
    activity_precedence, job_dependencies, to_job_xml, validate_job_xml, JobSequence, JobXmlOptions,
    DEFAULT_MAX_ITERATIONS,
};
pub use parser::parse;
pub use plan::{interpret, to_functional_plan, PlanExpr};

use crate::workflow::{Finding, WorkflowError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslError {
    #[error("syntax error at line {line}, column {col}: expected {expected}, found {found}")]
    Syntax { line: usize, col: usize, expected: String, found: String },
    #[error("line {line}: {message}")]
    Semantic { line: usize, message: String },
    #[error(transparent)]
    Graph(#[from] WorkflowError),
    #[error("workflow is unsound: {}", .0.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(", "))]
    UnsoundWorkflow(Vec<Finding>),
    #[error("not series-parallel: {0}")]
    NotSeriesParallel(String),
    #[error("iteration limit reached at decision {0:?}")]
    IterationLimit(String),
    #[error("invalid job document: {0}")]
    InvalidJobXml(String),
}

#[cfg(test)]
mod tests;
