//! Experiment harness: configuration, the episode loop, the comparator and
//! CSV/JSON output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod mdp_file;
pub mod output;
pub mod runner;

pub use config::{ExperimentConfig, Setup};
pub use error::{HarnessError, Result};
pub use runner::{run_all, run_seed, Comparator, RegretRecord, RunFailure, RunOutput};
