//! Batch experiment front end for the granular contact solvers: built-in
//! scenarios, parameter sweeps and CSV emission.

pub mod experiments;
pub mod scenarios;

pub use experiments::{
    rho_sweep, run_experiment, write_positions_csv, write_summary_csv, write_sweep_csv,
    write_trace_csv, ConfigOverrides, ExperimentResult, SummaryRow, SweepRow, TraceRow,
};
pub use scenarios::{build_scenario, pack_initial, PackBox, ScenarioName, ScenarioSpec};
