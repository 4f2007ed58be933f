//! Command-line front end: config parsing and the subcommands behind the
//! `opwlab` binary.

pub mod commands;
pub mod config;

pub use commands::{inspect, run_config, sweep, InspectFlags, RunSummary, SweepParam, SweepRow};
pub use config::{Experiment, ExperimentConfig};
