//! Experiment harness: configs, synthetic data, traces, and the runner.

pub mod config;
pub mod data;
pub mod run;
pub mod trace;

pub use config::{ExperimentConfig, ProblemSpec, SolverSpec, TopologySpec};
pub use data::{generate_logistic_data, logistic_instance, quadratic_instance};
pub use run::{
    prepare, run_experiment, run_prepared, run_solver, sweep, ExperimentOutcome, ExperimentSummary,
    PreparedExperiment, RunArtifacts, SweepSummary,
};
pub use trace::{
    emit_plot_data, read_trace_rows, spot_check_rel_errors, write_trace_csv, RunStatus, RunTrace,
    TraceRow,
};
