//! Command-line front end for `roughflow-core`: TOML run configurations,
//! driver/trajectory/graph file formats, the verification suite and reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x <= tol)` is meant to fail on NaN

pub mod commands;
pub mod config;
pub mod formats;
pub mod report;
pub mod seeds;
pub mod suite;

pub use commands::{Command, Outcome, Run};
pub use config::RunConfig;
pub use report::Report;
