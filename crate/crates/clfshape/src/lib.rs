//! Experiment runner for CLF-shaped discounted control.
//!
//! Reads a JSON [`config::ExperimentConfig`], runs discount and MPC-horizon
//! sweeps on top of `clfshape-core`, and writes CSV reports.
#![warn(missing_docs)]

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
