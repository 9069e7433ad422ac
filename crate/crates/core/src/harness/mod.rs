//! Experiment configuration, closed-loop runner, comparators and persistence.

pub mod checks;
pub mod comparator;
pub mod config;
pub mod output;
pub mod runner;
pub mod verification;

pub use comparator::{solve_comparator, ComparatorOptions};
pub use config::{ControllerSpec, ExperimentConfig, Scenario};
pub use output::{render_csv, summarize, write_results, CSV_HEADER};
pub use runner::{run_experiment, run_static_experiment, run_tv_experiment, ReplicateResult, RunOptions, RunResult};
