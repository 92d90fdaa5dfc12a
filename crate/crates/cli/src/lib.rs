//! Configuration-driven experiment runner writing CSV tables and a JSON run
//! record per experiment.
pub mod config;
pub mod experiments;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::run;
