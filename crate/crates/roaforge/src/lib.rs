//! Command-line runner for roaforge-core: configuration, experiment
//! protocols and result files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod app;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod parallel;

pub use error::{CliError, CliResult};
pub use roaforge_core as core;
