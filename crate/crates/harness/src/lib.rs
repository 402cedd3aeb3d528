//! Configuration-driven experiments for posterior interval estimation:
//! data simulation and loading, parallel shard sampling with per-shard
//! random streams, combination, oracle comparison and report files.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod report;

pub use config::{ExperimentConfig, Mode, Overrides, SamplerKind};
pub use error::{HarnessError, Result};
pub use experiment::{run_experiment, run_experiment_with_workers, ExperimentReport};
pub use report::{emit_report, EmitOptions};
