use serde::{Deserialize, Serialize};

use crate::error::{input_err, Result};

/// Longitudinal state: signed distance to the conflict point and speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub p: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(p: f64, v: f64) -> Self {
        Self { p, v }
    }
}

/// Objective weights: `omega1` for the CAV and `omega2` for the HDV, each
/// `[acceleration, speed tracking]`, plus the shared interaction weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MPCWeights {
    pub omega1: [f64; 2],
    pub omega2: [f64; 2],
    pub omega12: f64,
}

impl MPCWeights {
    /// Weights from base-10 logs of the CAV and HDV weights, with `omega12 = 1`.
    pub fn from_log10(z: &[f64], theta: &[f64]) -> Result<Self> {
        if z.len() != 2 || theta.len() != 2 {
            return input_err(format!(
                "z and theta must both be 2-vectors, got lengths {} and {}",
                z.len(),
                theta.len()
            ));
        }
        let w = Self {
            omega1: [10f64.powf(z[0]), 10f64.powf(z[1])],
            omega2: [10f64.powf(theta[0]), 10f64.powf(theta[1])],
            omega12: 1.0,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.omega1[0], self.omega1[1], self.omega2[0], self.omega2[1], self.omega12];
        if !all.iter().all(|w| w.is_finite() && *w > 0.0) {
            return input_err(format!("weights must be finite and positive, got {self:?}"));
        }
        Ok(())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            omega1: [c * self.omega1[0], c * self.omega1[1]],
            omega2: [c * self.omega2[0], c * self.omega2[1]],
            omega12: c * self.omega12,
        }
    }

    /// Weights divided by their maximum; the minimizer is unchanged.
    pub(crate) fn normalized(&self) -> Self {
        let m = self.omega1[0]
            .max(self.omega1[1])
            .max(self.omega2[0])
            .max(self.omega2[1])
            .max(self.omega12);
        self.scaled(1.0 / m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeedReference {
    MaxSpeed,
    /// Constant time-headway car following: `v_ref = (gap − standstill_gap) / time_headway`.
    CarFollowing { time_headway: f64, standstill_gap: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MPCConfig {
    pub horizon: usize,
    pub hdv_horizon: usize,
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub safety_radius: f64,
    /// Extra distance the CAV keeps beyond `safety_radius` in its own plan.
    pub planning_margin: f64,
    pub eps: f64,
    pub v_ref_policy: SpeedReference,
}

impl Default for MPCConfig {
    fn default() -> Self {
        Self {
            horizon: 12,
            hdv_horizon: 6,
            dt: 0.25,
            u_min: -5.0,
            u_max: 3.0,
            v_min: 0.0,
            v_max: 10.0,
            safety_radius: 5.0,
            planning_margin: 0.5,
            eps: 1e-3,
            v_ref_policy: SpeedReference::MaxSpeed,
        }
    }
}

impl MPCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.hdv_horizon == 0 {
            return input_err("horizons must be at least one step");
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return input_err("dt must be positive");
        }
        if !(self.u_min < 0.0 && self.u_max > 0.0) {
            return input_err("acceleration bounds must satisfy u_min < 0 < u_max");
        }
        if !(self.v_min >= 0.0 && self.v_min < self.v_max) {
            return input_err("speed bounds must satisfy 0 <= v_min < v_max");
        }
        if !(self.safety_radius > 0.0 && self.eps > 0.0) {
            return input_err("safety radius and eps must be positive");
        }
        if !(self.planning_margin >= 0.0 && self.planning_margin.is_finite()) {
            return input_err("planning margin must be finite and nonnegative");
        }
        if let SpeedReference::CarFollowing { time_headway, standstill_gap } = self.v_ref_policy {
            if !(time_headway > 0.0 && standstill_gap >= 0.0) {
                return input_err("car-following headway must be positive and gap nonnegative");
            }
        }
        Ok(())
    }
}

/// Initial-condition distribution and episode termination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub initial_position: (f64, f64),
    pub initial_speed: (f64, f64),
    pub exit_position: f64,
    pub time_cap: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            initial_position: (-30.0, -20.0),
            initial_speed: (3.0, 7.0),
            exit_position: 15.0,
            time_cap: 30.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let (p0, p1) = self.initial_position;
        let (v0, v1) = self.initial_speed;
        if !(p0 <= p1 && v0 <= v1 && p1 < self.exit_position && self.time_cap > 0.0) {
            return input_err("scenario ranges must be ordered, start before the exit, with a positive time cap");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SimConfig {
    pub mpc: MPCConfig,
    pub scenario: ScenarioConfig,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        self.scenario.validate()?;
        let (v0, v1) = self.scenario.initial_speed;
        if v0 < self.mpc.v_min || v1 > self.mpc.v_max {
            return input_err("initial speeds must lie within the speed bounds");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub lambda_time: f64,
    pub lambda_acce: f64,
    pub lambda_coll: f64,
    pub sigmoid_scale: f64,
    /// Episodes averaged per evaluation.
    pub n_s: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            lambda_time: 1.0,
            lambda_acce: 5.0,
            lambda_coll: 1e4,
            sigmoid_scale: 1.0,
            n_s: 20,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_s == 0 {
            return input_err("n_s must be at least 1");
        }
        if !(self.lambda_time >= 0.0 && self.lambda_acce >= 0.0 && self.lambda_coll >= 0.0 && self.sigmoid_scale > 0.0) {
            return input_err("metric weights must be nonnegative and the sigmoid scale positive");
        }
        Ok(())
    }
}
