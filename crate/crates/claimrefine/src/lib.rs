//! File formats, remote backends, the refinement loop and reporting on top
//! of `claimrefine-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod io;
pub mod orchestrator;
pub mod remote;
pub mod report;

pub use claimrefine_core as core;
