//! Experiment driver: declarative TOML configs in, CSV traces and a
//! summary table out, plus a self-contained verification battery.
//!
//! The pieces are library functions so integration tests can drive them
//! without spawning the binary: [`config`] parses and validates configs,
//! [`driver`] expands the algorithm × seed grid and writes the output
//! files, [`verify`] runs the cross-checks behind the `verify`
//! subcommand.

pub mod config;
pub mod driver;
pub mod verify;

pub use config::{
    AlgorithmSpec, DataSource, ExperimentConfig, ParamOverrides, ProblemSpec, ResolvedConfig,
};
pub use driver::{run_experiment, ExperimentSummary, RunOutcome};
pub use verify::{verify_suite, CheckResult, FaultHooks, VerifyReport};
