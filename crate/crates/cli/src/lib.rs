//! Experiment harness for the `lfoica-core` estimators: TOML configs,
//! seeded multi-replication runs, CSV time-series IO and JSON results.

pub mod config;
pub mod csvio;
pub mod error;
pub mod results;
pub mod run;

pub use config::{ExperimentConfig, Task};
pub use error::{CliError, ConfigError, DataError};
pub use results::{load_results, save_results, RunResult};
pub use run::run_experiment;
