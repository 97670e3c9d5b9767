//! Dataset ingestion, experiment wiring, simulations and reports.

mod experiment;
mod ingest;
mod schema_file;
pub mod synthetic;

pub use experiment::{
    attribute_table_path, emit_report, load_report, parse_detector, run_experiment, run_experiment_on,
    simulate_decision_rule, simulate_decision_rule_with, Attack, Defense, ExperimentConfig, Outcome, RunReport,
    SimulationSummary, TargetValue, NEGATIVE_CONTROL_EPS,
};
pub use ingest::{load_dataset, read_dataset};
pub use schema_file::{load_schema, parse_schema};
