//! Multi-fidelity Bayesian optimization and post-hoc run analysis.
//!
//! The crate is organized around the lifecycle of an optimization run:
//!
//! - [`space`] defines conditional mixed-type design spaces and their
//!   unit-hypercube encoding.
//! - [`scheduler`] plans HyperBand brackets and drives successive-halving
//!   promotions.
//! - [`kde`] holds the per-budget good/bad kernel density estimators that
//!   propose new configurations.
//! - [`optimizer`] ties model and scheduler together behind an `fmin`
//!   entry point with a local worker pool.
//! - [`history`] is the append-only trial log (JSONL on disk) that every
//!   analysis consumes.
//! - [`analysis`] computes per-budget hyperparameter importance (fANOVA,
//!   LPI), cross-budget rank correlation, and MDS footprints.
//! - [`benchmarks`] provides synthetic multi-fidelity objectives.

pub mod analysis;
pub mod benchmarks;
pub mod history;
pub mod kde;
pub mod optimizer;
pub mod scheduler;
pub mod space;

#[doc(hidden)]
pub mod testing;

pub use history::{RunHistory, TrialOutcome, TrialRecord};
pub use optimizer::{fmin, FminResult, Objective, OptimizerConfig};
pub use space::{Configuration, DesignSpace, Hyperparameter, ParamValue};
