//! Workflow orchestration over virtualized "calculator + program"
//! resources.
//!
//! Services exchange data only through a content-addressed store, in a
//! unit-tagged intermediate format ([`quantities`]). Workflows are
//! activity diagrams ([`workflow`]) written in a small text language
//! ([`dsl`]), verified by a token game, and run by the [`engine`] against a
//! resource registry ([`resources`]). [`simgrid`] supplies a deterministic
//! simulated executor and a helium-in-zeolite diffusion case study.

pub mod quantities;
pub mod resources;
pub mod storage;
pub mod workflow;
pub mod dsl;
pub mod engine;
pub mod simgrid;
