//! Orchestration: configs, the CLI verbs, experiment recipes and reports.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod report;

pub use config::{ExperimentId, Preprocess, RunConfig};
pub use report::{auc, ExperimentReport, Histogram, Summary};
