//! Experiment harness: configuration, the build pipeline, sweeps, plots and reports.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;
pub mod report;
pub mod sweep;
