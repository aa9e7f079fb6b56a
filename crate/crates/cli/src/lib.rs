//! Experiment runner for the `bregman_ot` solvers: a solver convergence
//! benchmark and a continuous domain adaptation study on rotating two moons.

pub mod config;
pub mod experiments;

pub use config::{load_config, parse_config, ConfigError, Experiment, ExperimentConfig};
pub use experiments::{run, run_convergence_benchmark, run_da_experiment, CliError};
