//! Experiment harness: configuration, corpus runs and reports.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{BackendConfig, BackendKind, ExperimentConfig, Stage2Config};
pub use experiment::{read_records, run_experiment, CurvePoint, InstanceRecord};
pub use report::{build_report, summarize, Aggregate, Report};
