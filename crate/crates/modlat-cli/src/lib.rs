//! Library half of the experiment runner: configuration parsing, experiment
//! orchestration, and report rendering. The `modlat` binary is a thin CLI
//! over these modules, and the acceptance suite drives them directly.

pub mod config;
pub mod experiment;
pub mod report;

pub use config::{ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, sweep, ExperimentResult, SweepPoint};
pub use report::{write_reports, write_sweep_reports, WrittenReports};
