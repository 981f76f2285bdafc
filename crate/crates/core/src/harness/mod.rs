//! Run configuration, artifacts and the learn / compare / heatmap / simulate
//! pipelines behind the command-line tool.

mod benchmark;
mod compare;
mod config;
mod export;
mod learn;

pub use benchmark::{BenchmarkEvaluator, BenchmarkId};
pub use compare::{
    compare_controllers, episode_setups, manifest_path, run_compare, Comparison, ComparisonRow, EpisodeResult,
    EpisodeSetup, EPISODES_FILE, TABLE_FILE,
};
pub use config::{resolve_output_dir, ComparisonSpec, ControllerSpec, EvaluatorConfig, RunConfig, OUTPUT_DIR_ENV};
pub use export::{export_heatmap, heatmap_grid, heatmap_path, simulate_to_csv, HeatmapGrid, CONTEXTS_FILE, TRAJECTORY_FILE};
pub use learn::{run_learn, CheckpointFile, LearnOutput, ModelFile, CHECKPOINT_DIR, MODEL_FILE, MODEL_FORMAT, RUN_LOG_FILE};

/// Process exit code for an error: 2 configuration, 3 numerical, 4 I/O.
pub fn exit_code(e: &crate::Error) -> i32 {
    use crate::Error::*;
    match e {
        Config(_) | InvalidInput(_) => 2,
        Numerical(_) | State(_) | Evaluation(_) => 3,
        Io(_) | Serialization(_) | Csv(_) => 4,
    }
}
