//! Core of the claim refinement loop.
//!
//! Everything in this crate is pure computation over owned data: the toy
//! generation policy and its exact gradients, the DPO objective and trainer,
//! the preference-pair rules, the lexical entailment oracle, prompt templates
//! and the evaluation metrics. File formats, HTTP backends and the CLI live in
//! the `claimrefine` companion crate.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod dpo;
pub mod extraction;
pub mod factcheck;
mod backend;
mod label;
pub mod metrics;
pub mod policy;
pub mod preference;
pub mod rng;
pub mod synthetic;
pub mod text;
pub mod warmstart;

pub use backend::BackendError;
pub use label::{Label, ParseLabelError};
