//! Evaluation of mapping and localization runs: gridded consistency error,
//! trajectory error against ground truth, dense map export and iteration
//! accounting.

pub mod consistency;
pub mod error;
pub mod export;
pub mod grid;
pub mod report;
pub mod throughput;
pub mod trajectory;

pub use consistency::{consistency_error, map_depth, ReferenceGrid};
pub use error::{Error, Result};
pub use export::{export_map_grid, MapExport};
pub use grid::GridMap;
pub use report::{evaluate_run, ParticleOutcome, RunEvaluation, RunInputs, RunReport};
pub use throughput::{throughput_report, IterationStats, ThroughputReport};
pub use trajectory::{trajectory_error, TrajectoryError};
