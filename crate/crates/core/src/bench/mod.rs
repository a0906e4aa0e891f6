//! Scenario files, benchmark orchestration over `(planner, seed)` pairs,
//! CSV/JSON reports and plot data.

mod emit;
mod runner;
mod scenario;

pub use emit::{emit_plot_data, emit_prior_demo, prior_demo};
pub use runner::{
    aggregate, execute, run_benchmark, run_single, trace_file_name, write_report, write_trace, Aggregate,
    BenchReport, FinalState, RunRecord, RunRow, Stat, SUCCESS_ENDPOINT, SUCCESS_VIOLATION,
};
pub use scenario::{
    load_scenario, KernelConfig, PlanarConfig, PlannerEntry, ProblemConfig, ScenarioFile, ToyConfig,
};
