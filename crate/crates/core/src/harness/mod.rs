//! Experiment orchestration: configuration profiles, run manifests and
//! the evolve / flexibility / scalability / behavior / replay recipes
//! behind the command-line interface.

pub mod config;
mod experiments;
mod manifest;

pub use config::{ExperimentConfig, Profile};
pub use experiments::{
    export_tables, load_best_controllers, replay_run, run_behavior, run_evolution,
    run_flexibility, run_scalability, scaled_box_side, BestController, EvolutionOutput,
    FITNESS_TABLE, SCALABILITY_BASELINE_SWARM,
};
pub use manifest::{
    compare_outputs, inventory, sha256_hex, FileEntry, ReplayReport, RunManifest, MANIFEST_FILE,
};
