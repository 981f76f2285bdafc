use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{MetricConfig, ScenarioConfig, SimConfig, VehicleState};
use super::episode::{simulate_episode, ScenarioOutcome};
use crate::contextual_bo::ObjectiveEvaluator;
use crate::error::Result;
use crate::solution::mix_seed;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `λ_time·t_f + λ_acce·∫a² + λ_coll·sigmoid(g_coll / scale)`.
pub fn episode_metric(out: &ScenarioOutcome, m: &MetricConfig) -> f64 {
    m.lambda_time * out.exit_time
        + m.lambda_acce * out.accel_integral
        + m.lambda_coll * sigmoid(out.coll_margin / m.sigmoid_scale)
}

/// Metric charged for an episode that could not be simulated.
pub fn worst_case_metric(cfg: &SimConfig, m: &MetricConfig) -> f64 {
    let cap = cfg.scenario.time_cap;
    let a_max = cfg.mpc.u_min.abs().max(cfg.mpc.u_max);
    m.lambda_time * cap + m.lambda_acce * a_max * a_max * cap + m.lambda_coll
}

/// CAV and HDV initial states drawn uniformly from the scenario ranges.
pub fn sample_initial_conditions<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> [VehicleState; 2] {
    let mut draw = |(lo, hi): (f64, f64)| lo + rng.random::<f64>() * (hi - lo);
    let p1 = draw(cfg.initial_position);
    let v1 = draw(cfg.initial_speed);
    let p2 = draw(cfg.initial_position);
    let v2 = draw(cfg.initial_speed);
    [VehicleState::new(p1, v1), VehicleState::new(p2, v2)]
}

/// Initial conditions of episode `index` under master `seed`.
pub fn episode_initial_conditions(cfg: &ScenarioConfig, seed: u64, index: usize) -> [VehicleState; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index as u64));
    sample_initial_conditions(cfg, &mut rng)
}

/// Metric of each of the `n_s` seeded episodes; failed episodes get the worst case.
pub fn episode_metrics(z: &[f64], theta: &[f64], cfg: &SimConfig, m: &MetricConfig, seed: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    m.validate()?;
    super::config::MPCWeights::from_log10(z, theta)?;
    Ok((0..m.n_s)
        .map(|i| {
            let init = episode_initial_conditions(&cfg.scenario, seed, i);
            match simulate_episode(init, z, theta, cfg) {
                Ok(out) => episode_metric(&out, m),
                Err(e) => {
                    log::warn!("episode {i} failed ({e}); charging the worst case");
                    worst_case_metric(cfg, m)
                }
            }
        })
        .collect())
}

/// Negative mean metric over `n_s` seeded episodes.
pub fn performance(z: &[f64], theta: &[f64], cfg: &SimConfig, m: &MetricConfig, seed: u64) -> Result<f64> {
    let metrics = episode_metrics(z, theta, cfg, m, seed)?;
    Ok(-metrics.iter().sum::<f64>() / metrics.len() as f64)
}

/// Closed-loop simulation as a noisy black-box objective: every call draws
/// fresh initial conditions from a seed stream.
#[derive(Debug, Clone)]
pub struct CavEvaluator {
    pub sim: SimConfig,
    pub metric: MetricConfig,
    seed: u64,
    calls: u64,
}

impl CavEvaluator {
    pub fn new(sim: SimConfig, metric: MetricConfig, seed: u64) -> Result<Self> {
        sim.validate()?;
        metric.validate()?;
        Ok(Self {
            sim,
            metric,
            seed,
            calls: 0,
        })
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }
}

impl ObjectiveEvaluator for CavEvaluator {
    fn evaluate(&mut self, z: &[f64], theta: &[f64]) -> Result<f64> {
        self.calls += 1;
        performance(z, theta, &self.sim, &self.metric, mix_seed(self.seed, self.calls))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(tf: f64, acc: f64, g: f64) -> ScenarioOutcome {
        ScenarioOutcome {
            times: vec![0.0],
            cav: vec![VehicleState::new(0.0, 0.0)],
            cav_accel: vec![],
            hdvs: vec![],
            hdv_accels: vec![],
            exit_time: tf,
            coll_margin: g,
            accel_integral: acc,
            timed_out: false,
            infeasible_steps: 0,
        }
    }

    #[test]
    fn metric_examples() {
        let m = MetricConfig::default();
        assert!((episode_metric(&outcome(10.0, 2.0, -100.0), &m) - 20.0).abs() < 1e-3);
        assert!((episode_metric(&outcome(0.0, 0.0, 100.0), &m) - 1e4).abs() < 1e-6);
        assert_eq!(episode_metric(&outcome(0.0, 0.0, 0.0), &m), 5e3);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
