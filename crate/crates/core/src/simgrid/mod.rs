//! Simulated grid: a deterministic virtual-clock executor and a toy
//! helium-in-zeolite pipeline built from mock applications.
//!
//! Each mock writes its own native text format; adapters turn that text
//! into the intermediate [`Dataset`](crate::quantities::Dataset) format.

mod analysis;
mod case_study;
mod executor;
mod mocks;

pub use analysis::{diffusivity, diffusivity_stderr, msd, Trajectory};
pub use case_study::{build_case_study, case_study_dsl, testbed, testbed_descriptors};
pub use executor::SimulatedExecutor;
pub use mocks::{
    app_for, md_step, mock_cbmc, mock_gcmc, mock_lattice, mock_md, mock_msd, Bigmac, Dlpoly, Echo, Gulp, Izafetch,
    MockApp, Msdtool, MOCK_PROGRAMS,
};

use crate::quantities::QuantityError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("no free sites for helium")]
    NoFreeSites,
    #[error("missing input slot {0:?}")]
    MissingInput(String),
    #[error("native output does not parse: line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Quantity(#[from] QuantityError),
}
