//! Config-driven experiment harness over the equilibration/objectivity
//! toolkit: scenario configs in TOML, deterministic JSON + CSV results,
//! and a directory-level suite runner.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{load_config, ConfigError, ExperimentKind, ScenarioConfig};
pub use report::{ResultRecord, Verdict};
pub use runner::{run_and_write, run_scenario, run_suite, Overrides, RunError};

/// Exit-code contract: 0 all-pass, 1 verdict failure, 2 configuration error,
/// 3 numerical or IO error.
pub fn exit_code(outcome: &Result<ResultRecord, RunError>) -> u8 {
    match outcome {
        Ok(record) if record.payload.all_pass() => 0,
        Ok(_) => 1,
        Err(RunError::Config(_)) => 2,
        Err(RunError::Numerical(_) | RunError::Io(_)) => 3,
    }
}
