//! Experiment harness for `mc-implicit`: JSON configurations, grid sweeps,
//! CSV/JSON artifacts and the command-line subcommands.

// `!(x > 0.0)` also rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod ghosts;
pub mod persist;
pub mod svg;
pub mod sweep;

pub use commands::{Options, Outcome};
pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
