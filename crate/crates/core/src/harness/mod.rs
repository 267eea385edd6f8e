//! Batch experiments: configuration, scheduling, CSV traces and summary statistics.

mod config;
mod report;
mod run;

pub use config::{AlgoKind, CSpec, DataSpec, ExperimentConfig, StartSpec, StepBase, StepSpec, TaskKind};
pub use report::{
    best_per_seed, emit_csv, excess_bands, parse_csv, stderr_band, stderr_bands, Band, CsvRow, RunRecord,
    CSV_HEADER,
};
pub use run::{run_experiment, run_experiment_with, BatchResult, Execution, RunOutcome, RunStatus};
