//! Scenario files, the certification pipeline and its output files.

mod config;
mod export;
mod pipeline;

pub use config::{parse_config, RunConfig, ScenarioConfig, TimeConfig, Tolerances, DEFAULT_SAVE_EVERY};
pub use export::{diagnostics_csv, energy_csv, export, DIAGNOSTIC_HEADER};
pub use pipeline::{
    run_certify, run_named, BranchReport, CertificationReport, Check, EnergySummary, Exports, HomogeneousReport,
    IterationResult, LyapunovSummary, PullbackSummary, RunSummary, Stage, Status, MAIN_RUN,
};
