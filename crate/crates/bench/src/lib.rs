//! Scenario files, rendering, language-model agents, the experiment
//! harness and the `goalbench` command line, on top of `goalassign-core`.

pub mod cli;
pub mod experiment;
pub mod llm;
pub mod render;
pub mod scenario_file;

pub use experiment::{run_experiment, summarize, ExperimentConfig, ResultRow, Summary};
