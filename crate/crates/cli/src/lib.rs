//! Experiment runner behind the `sgergo` binary.

pub mod config;
pub mod output;
pub mod runner;
