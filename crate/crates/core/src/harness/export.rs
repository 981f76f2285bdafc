use std::fs;
use std::path::{Path, PathBuf};

use super::config::{EvaluatorConfig, RunConfig};
use crate::error::{input_err, Error, Result};
use crate::sim::{episode_initial_conditions, simulate_episode, ScenarioOutcome};
use crate::solution::{adapt, SolutionModel};

pub const CONTEXTS_FILE: &str = "sampled_contexts.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";

pub fn heatmap_path(out_dir: &Path, z_index: usize) -> PathBuf {
    out_dir.join(format!("heatmap_z{z_index}.csv"))
}

/// Adapted weights on a regular context grid: `points[i]` maps to `values[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
}

/// Evaluates `adapt` on a `grid`-per-axis lattice over the context domain,
/// first axis slowest.
pub fn heatmap_grid(model: &SolutionModel, grid: usize) -> Result<HeatmapGrid> {
    if grid < 2 {
        return input_err(format!("grid resolution must be at least 2, got {grid}"));
    }
    let points = model.theta_domain().grid(grid);
    let values = points.iter().map(|p| adapt(model, p)).collect::<Result<Vec<_>>>()?;
    Ok(HeatmapGrid { points, values })
}

/// Writes one `heatmap_z<d>.csv` per output dimension plus the contexts the
/// model was trained on.
pub fn export_heatmap(model: &SolutionModel, grid: usize, out_dir: &Path) -> Result<HeatmapGrid> {
    let hm = heatmap_grid(model, grid)?;
    fs::create_dir_all(out_dir)?;
    let theta_cols: Vec<String> = (0..model.theta_domain().dim()).map(|i| format!("theta_{i}")).collect();
    for d in 0..model.z_domain().dim() {
        let mut w = csv::Writer::from_path(heatmap_path(out_dir, d))?;
        let mut header = theta_cols.clone();
        header.push(format!("z_{d}"));
        w.write_record(&header)?;
        for (p, v) in hm.points.iter().zip(&hm.values) {
            let mut row: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            row.push(v[d].to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    let mut w = csv::Writer::from_path(out_dir.join(CONTEXTS_FILE))?;
    let mut header = vec!["order".to_string()];
    header.extend(theta_cols);
    header.extend((0..model.z_domain().dim()).map(|i| format!("z_star_{i}")));
    w.write_record(&header)?;
    for (i, (t, z)) in model.contexts().iter().zip(model.solutions()).enumerate() {
        let mut row = vec![(i + 1).to_string()];
        row.extend(t.iter().chain(z).map(|x| x.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(hm)
}

/// Simulates one episode of the configured CAV scenario with initial states
/// drawn from `seed` and writes its trajectory.
pub fn simulate_to_csv(cfg: &RunConfig, z: &[f64], theta: &[f64], seed: u64, out_dir: &Path) -> Result<ScenarioOutcome> {
    let EvaluatorConfig::CavSim { sim, .. } = &cfg.evaluator else {
        return Err(Error::Config("simulate needs a cav_sim evaluator".into()));
    };
    sim.validate().map_err(|e| Error::Config(e.to_string()))?;
    let init = episode_initial_conditions(&sim.scenario, seed, 0);
    let out = simulate_episode(init, z, theta, sim)?;
    fs::create_dir_all(out_dir)?;
    out.write_csv(fs::File::create(out_dir.join(TRAJECTORY_FILE))?)?;
    Ok(out)
}
