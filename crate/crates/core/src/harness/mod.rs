//! Experiment runner, configuration and property-suite driver behind the `fde` binary.

pub mod config;
pub mod experiment;
pub mod properties;

pub use config::{ExperimentConfig, ExperimentKind, Method};
pub use experiment::{run_experiment, run_experiment_full, save, ExperimentOutput};
pub use properties::{run_property_suite, Suite, SuiteReport};
