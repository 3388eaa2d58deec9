//! Scenario files in, trajectory CSVs and JSON summaries out.

pub mod check;
pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, CommandKind, ScenarioConfig};
pub use error::{CliError, CliResult};
pub use output::RunSummary;
pub use run::{run, run_check, RunOutput};
