//! Outcome indistinguishability toolkit: predictors, distinguishers at four
//! access levels, the audit-and-update construction, fairness reductions,
//! prediction indistinguishability and oracle-access hardness demos.

pub mod catalog;
pub mod cli;
pub mod construct;
pub mod distinguisher;
pub mod domain;
pub mod multi;
pub mod pi;
pub mod error;
pub mod fairness;
pub mod hardness;
pub mod ingest;
pub mod predictor;
pub mod report;
pub mod rng;
pub mod size;
pub mod stats;

pub use error::{OiError, Result};
