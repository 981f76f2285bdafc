//! Two-vehicle unsignalized-intersection benchmark: double-integrator
//! dynamics, a potential-game MPC for the CAV, an optimizing HDV model, and
//! the closed-loop performance metric.

mod config;
mod episode;
mod metric;
mod mpc;

pub use config::{MPCConfig, MPCWeights, MetricConfig, ScenarioConfig, SimConfig, SpeedReference, VehicleState};
pub use episode::{select_active_hdv, simulate_episode, simulate_multi_hdv_episode, ScenarioOutcome};
pub use metric::{
    episode_initial_conditions, episode_metric, episode_metrics, performance, sample_initial_conditions, sigmoid,
    worst_case_metric, CavEvaluator,
};
pub use mpc::{hdv_action, mpc_objective, rollout, solve_mpc, step_dynamics, MpcController, MpcSolution, PredictedTrajectory};
