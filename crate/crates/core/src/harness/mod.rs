//! Experiment configs, orchestration, CSV/JSON persistence and the CLI.

pub mod cli;
pub mod config;
pub mod output;
pub mod run;

pub use cli::main_with_args;
pub use config::ExperimentConfig;
pub use output::Format;
pub use run::{run, run_probes, Failure, ProbeRecord, RunRecord, TraceRow};
