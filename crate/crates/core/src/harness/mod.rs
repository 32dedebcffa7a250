//! Experiment plumbing: seed derivation, config loading and the runners for
//! each pipeline.

pub mod caching;
pub mod experiment;
pub mod merge;
pub mod seeds;

pub use caching::{run_caching, run_caching_with, CachingConfig, CachingOutcome, CachingVariant};
pub use experiment::{
    output_root, plan_sweep, replay_experiment, run_experiment, run_sweep, write_metrics_csv, Axis, CachingRun,
    ExperimentConfig, Manifest, Pipeline, RunStatus, RunSummary, SweepOutcome, SweepReport, SweepRun, OUTPUT_ROOT_ENV,
};
pub use merge::overlay_defaults;
pub use seeds::SeedTree;
