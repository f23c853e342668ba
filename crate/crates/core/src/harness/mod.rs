//! Configuration, snapshot persistence and the experiment suite.

pub mod config;
pub mod experiments;
pub mod output;
pub mod snapshot_io;

pub use config::{ExperimentConfig, ExperimentId, Sweep};
pub use experiments::{run, run_experiment, ExperimentResult};
pub use output::Table;
pub use snapshot_io::{load_snapshots, read_snapshots, save_snapshots, write_snapshots, SnapshotHeader};
