//! Experiment orchestration: configuration, named scenarios, seeded trials,
//! sweeps on a worker pool, aggregation and CSV/JSON output.

pub mod aggregate;
pub mod config;
pub mod output;
pub mod scenarios;
pub mod sweep;
pub mod trial;

pub use aggregate::{aggregate, ModelSummary, Stats};
pub use config::{ExperimentConfig, SweepAxis, SweepCombine, SweepConfig, WarmupMode};
pub use output::write_outputs;
pub use scenarios::{scenario, SCENARIOS};
pub use sweep::{run_experiment, ExperimentReport, PointReport};
pub use trial::{run_trial, trial_seed, TrialContext, TrialResult};
