use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::benchmark::BenchmarkEvaluator;
use super::config::{EvaluatorConfig, RunConfig};
use crate::contextual_bo::{write_run_log, IterationRecord, ObjectiveEvaluator, SurrogateState};
use crate::error::{Error, Result};
use crate::sim::CavEvaluator;
use crate::solution::{mix_seed, outer_loop, Checkpoint, SolutionModel, SolutionState};

pub const MODEL_FORMAT: &str = "ctxbo-solution-model";
pub const MODEL_FILE: &str = "model.json";
pub const RUN_LOG_FILE: &str = "run_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Learned solution model together with the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub run_config: RunConfig,
    /// Completed outer iterations.
    pub iterations: usize,
    pub solution: SolutionState,
}

impl ModelFile {
    pub fn new(run_config: RunConfig, iterations: usize, model: &SolutionModel) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: 1,
            run_config,
            iterations,
            solution: model.to_state(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| std::io::Error::new(e.kind(), format!("cannot read model file {}: {e}", path.display())))?;
        let file: Self = serde_json::from_str(&text)?;
        if file.format != MODEL_FORMAT {
            return Err(Error::State(format!("{} is not a solution-model file", path.display())));
        }
        Ok(file)
    }

    pub fn model(&self) -> Result<SolutionModel> {
        SolutionModel::from_state(self.solution.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Snapshot written after every outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub run_config: RunConfig,
    pub iteration: usize,
    pub solution: SolutionState,
    pub surrogate: SurrogateState,
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[derive(Debug)]
pub struct LearnOutput {
    pub model: SolutionModel,
    pub records: Vec<IterationRecord>,
    pub model_path: PathBuf,
    pub log_path: PathBuf,
}

pub(crate) fn build_evaluator(cfg: &RunConfig) -> Result<Box<dyn ObjectiveEvaluator>> {
    Ok(match &cfg.evaluator {
        EvaluatorConfig::AnalyticBenchmark { id, noise_std } => {
            Box::new(BenchmarkEvaluator::new(*id, *noise_std, mix_seed(cfg.seed, 5))?)
        }
        EvaluatorConfig::CavSim { sim, metric } => {
            Box::new(CavEvaluator::new(sim.clone(), metric.clone(), mix_seed(cfg.seed, 6))?)
        }
    })
}

/// Runs the outer loop and writes `model.json`, `run_log.csv` and one
/// checkpoint per iteration under `out_dir`. Nothing is written when the
/// configuration is invalid. When an iteration fails, the artifacts of the
/// last completed iteration are still written and the failure is returned.
pub fn run_learn(cfg: &RunConfig, out_dir: &Path) -> Result<LearnOutput> {
    cfg.validate()?;
    let mut evaluator = build_evaluator(cfg)?;
    let (z_domain, theta_domain) = cfg.domains();
    let outer = cfg.outer_loop_config();

    let checkpoint_dir = out_dir.join(CHECKPOINT_DIR);
    fs::create_dir_all(&checkpoint_dir)?;
    let mut save = |cp: &Checkpoint<'_>| -> Result<()> {
        let file = CheckpointFile {
            run_config: cfg.clone(),
            iteration: cp.iteration,
            solution: cp.solution.to_state(),
            surrogate: cp.surrogate.to_state(),
        };
        write_json(&checkpoint_dir.join(format!("iter_{:03}.json", cp.iteration)), &file)
    };
    let run = outer_loop(evaluator.as_mut(), &z_domain, &theta_domain, &outer, &mut save)?;

    let model_path = out_dir.join(MODEL_FILE);
    let log_path = out_dir.join(RUN_LOG_FILE);
    ModelFile::new(cfg.clone(), run.solution.len(), &run.solution).save(&model_path)?;
    write_run_log(fs::File::create(&log_path)?, &run.records)?;
    if let Some(e) = run.failure {
        return Err(e);
    }
    Ok(LearnOutput {
        model: run.solution,
        records: run.records,
        model_path,
        log_path,
    })
}
