//! Configuration, file formats, metrics and experiment drivers.

pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;

pub use config::{CaseSpec, ExperimentSpec, OnlineSpec, TrainingSpec};
pub use experiment::{run_experiment, run_fom, run_rom, sweep, train, RomRun, TrainedModel};
pub use metrics::{relative_error, shock_front, MetricsReport};
