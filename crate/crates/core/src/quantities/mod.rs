//! Unit-tagged physical observables: the intermediate format every
//! service reads and writes.

mod canonical;
mod dataset;
mod units;

pub use canonical::{ContentId, HEADER};
pub use dataset::{
    convert, project, Dataset, ExtractionSpec, Observable, ObservableKind, Table, Values,
};
pub use units::{registry, Dimension, Unit, UnitRegistry};

pub(crate) use dataset::is_token;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QuantityError {
    #[error("dimension mismatch for {name:?}: cannot convert {from} to {to}")]
    DimensionMismatch { name: String, from: String, to: String },
    #[error("unknown unit {0:?}")]
    UnknownUnit(String),
    #[error("missing observable {0:?}")]
    MissingObservable(String),
    #[error("duplicate observable {0:?}")]
    DuplicateObservable(String),
    #[error("invalid observable: {0}")]
    InvalidObservable(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}
