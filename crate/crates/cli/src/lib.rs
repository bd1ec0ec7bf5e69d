//! Batch front-end for the source simulator: scenario configs in,
//! deterministic CSV and summary files out.

pub mod config;
pub mod scenario;

pub use config::{parse_config, render_config, ConfigError, Configs, Scenario};
pub use scenario::{run_scenario, ScenarioError};
