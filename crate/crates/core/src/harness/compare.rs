use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ComparisonSpec, ControllerSpec};
use super::learn::ModelFile;
use crate::error::{Error, Result};
use crate::sim::{episode_initial_conditions, simulate_episode, ScenarioOutcome, VehicleState};
use crate::solution::{adapt, mix_seed, SolutionModel};

pub const TABLE_FILE: &str = "comparison.csv";
pub const EPISODES_FILE: &str = "episodes.csv";

/// Context and initial states shared by every controller for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSetup {
    pub index: usize,
    pub theta: Vec<f64>,
    pub init: [VehicleState; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub controller: String,
    /// The setup this controller was actually run on.
    pub setup: EpisodeSetup,
    pub z: Vec<f64>,
    pub exit_time: f64,
    pub coll_margin: f64,
    pub accel_integral: f64,
}

impl EpisodeResult {
    pub fn is_safe(&self) -> bool {
        self.coll_margin < 0.0
    }
}

/// Aggregate row of the comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub controller: String,
    pub episodes: usize,
    pub safe_episodes: usize,
    pub mean_travel_time: f64,
    /// Mean over episodes of `∫a² / t_f`.
    pub mean_acceleration: f64,
}

impl ComparisonRow {
    pub fn safe_fraction(&self) -> f64 {
        self.safe_episodes as f64 / self.episodes as f64
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub setups: Vec<EpisodeSetup>,
    pub rows: Vec<ComparisonRow>,
    pub episodes: Vec<EpisodeResult>,
}

impl Comparison {
    pub fn row(&self, controller: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.controller == controller)
    }
}

/// Paired episode setups: identical for every controller of a spec.
pub fn episode_setups(spec: &ComparisonSpec) -> Vec<EpisodeSetup> {
    let context_seed = mix_seed(spec.seed, 7);
    let init_seed = mix_seed(spec.seed, 8);
    let (lo, hi) = (spec.contexts.lower(), spec.contexts.upper());
    (0..spec.episodes)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(context_seed, i as u64));
            let theta = lo
                .iter()
                .zip(hi)
                .map(|(l, h)| l + rng.random::<f64>() * (h - l))
                .collect();
            EpisodeSetup {
                index: i,
                theta,
                init: episode_initial_conditions(&spec.sim.scenario, init_seed, i),
            }
        })
        .collect()
}

enum Policy {
    Adaptive(SolutionModel),
    Fixed(Vec<f64>),
}

impl Policy {
    fn load(c: &ControllerSpec) -> Result<Self> {
        Ok(match c {
            ControllerSpec::Fixed { z, .. } => Policy::Fixed(z.clone()),
            ControllerSpec::Adaptive { model, .. } => {
                let file = ModelFile::load(model)?;
                let m = file.model()?;
                if m.theta_domain().dim() != 2 || m.z_domain().dim() != 2 {
                    return Err(Error::Config(format!("{} is not a two-dimensional CAV model", model.display())));
                }
                Policy::Adaptive(m)
            }
        })
    }

    fn weights(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match self {
            Policy::Fixed(z) => Ok(z.clone()),
            Policy::Adaptive(m) => adapt(m, theta),
        }
    }
}

fn summarize(name: &str, results: &[EpisodeResult]) -> ComparisonRow {
    let n = results.len();
    ComparisonRow {
        controller: name.to_string(),
        episodes: n,
        safe_episodes: results.iter().filter(|r| r.is_safe()).count(),
        mean_travel_time: results.iter().map(|r| r.exit_time).sum::<f64>() / n as f64,
        mean_acceleration: results
            .iter()
            .map(|r| if r.exit_time > 0.0 { r.accel_integral / r.exit_time } else { 0.0 })
            .sum::<f64>()
            / n as f64,
    }
}

/// Simulates every controller on the same episodes without writing anything.
pub fn compare_controllers(spec: &ComparisonSpec) -> Result<Comparison> {
    spec.validate()?;
    let policies = spec.controllers.iter().map(Policy::load).collect::<Result<Vec<_>>>()?;
    let setups = episode_setups(spec);
    let mut rows = Vec::new();
    let mut episodes = Vec::new();
    for (c, policy) in spec.controllers.iter().zip(&policies) {
        let mut results = Vec::with_capacity(setups.len());
        for s in &setups {
            let z = policy.weights(&s.theta)?;
            let out: ScenarioOutcome = simulate_episode(s.init, &z, &s.theta, &spec.sim)?;
            results.push(EpisodeResult {
                controller: c.name().to_string(),
                setup: s.clone(),
                z,
                exit_time: out.exit_time,
                coll_margin: out.coll_margin,
                accel_integral: out.accel_integral,
            });
        }
        rows.push(summarize(c.name(), &results));
        episodes.extend(results);
    }
    Ok(Comparison { setups, rows, episodes })
}

pub fn manifest_path(out_dir: &Path, controller: &str) -> PathBuf {
    out_dir.join(format!("manifest_{controller}.csv"))
}

fn write_manifest<'a>(path: &Path, setups: impl Iterator<Item = &'a EpisodeSetup>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "theta_0", "theta_1", "p1", "v1", "p2", "v2"])?;
    for s in setups {
        let mut row = vec![s.index.to_string()];
        row.extend(s.theta.iter().map(|v| v.to_string()));
        for v in &s.init {
            row.extend([v.p.to_string(), v.v.to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the comparison and writes the summary table, the per-episode values
/// and one episode manifest per controller.
pub fn run_compare(spec: &ComparisonSpec, out_dir: &Path) -> Result<Comparison> {
    let result = compare_controllers(spec)?;
    fs::create_dir_all(out_dir)?;

    let mut w = csv::Writer::from_path(out_dir.join(TABLE_FILE))?;
    w.write_record(["controller", "episodes", "safe_episodes", "safe_fraction", "mean_travel_time", "mean_acceleration"])?;
    for r in &result.rows {
        w.write_record([
            r.controller.clone(),
            r.episodes.to_string(),
            r.safe_episodes.to_string(),
            r.safe_fraction().to_string(),
            r.mean_travel_time.to_string(),
            r.mean_acceleration.to_string(),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out_dir.join(EPISODES_FILE))?;
    w.write_record(["controller", "episode", "z_0", "z_1", "travel_time", "coll_margin", "accel_integral", "safe"])?;
    for e in &result.episodes {
        let mut row = vec![e.controller.clone(), e.setup.index.to_string()];
        row.extend(e.z.iter().map(|v| v.to_string()));
        row.extend([
            e.exit_time.to_string(),
            e.coll_margin.to_string(),
            e.accel_integral.to_string(),
            e.is_safe().to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;

    for c in &spec.controllers {
        let own = result.episodes.iter().filter(|e| e.controller == c.name()).map(|e| &e.setup);
        write_manifest(&manifest_path(out_dir, c.name()), own)?;
    }
    Ok(result)
}
