//! Experiment harness for `aoi-core`: scenario files, presets, a parallel
//! deterministic runner and the `aoi` command line.

pub mod admission;
pub mod config;
pub mod error;
pub mod presets;
pub mod runner;
pub mod validate;

pub use config::{RunPolicy, ScenarioConfig};
pub use error::{CliError, Result, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION};
pub use runner::{run_scenario, write_csv, Row};
