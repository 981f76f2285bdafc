use super::config::{MPCConfig, MPCWeights, VehicleState};
use crate::error::{input_err, Result};
use crate::optim::{lbfgs_box, LbfgsOptions};

/// Double-integrator step: `p' = p + dt·v + ½dt²·a`, `v' = v + dt·a`.
pub fn step_dynamics(state: VehicleState, a: f64, dt: f64) -> VehicleState {
    VehicleState {
        p: state.p + dt * state.v + 0.5 * dt * dt * a,
        v: state.v + dt * a,
    }
}

/// States `x_0..x_H` produced by applying `u` from `x0`.
pub fn rollout(x0: VehicleState, u: &[f64], dt: f64) -> Vec<VehicleState> {
    let mut states = Vec::with_capacity(u.len() + 1);
    states.push(x0);
    let mut s = x0;
    for &a in u {
        s = step_dynamics(s, a, dt);
        states.push(s);
    }
    states
}

/// Inputs and predicted states of both vehicles over one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedTrajectory {
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// `H + 1` states each, starting with the initial state.
    pub x1: Vec<VehicleState>,
    pub x2: Vec<VehicleState>,
    pub v_ref: [f64; 2],
}

impl PredictedTrajectory {
    pub fn from_inputs(x1: VehicleState, x2: VehicleState, u1: Vec<f64>, u2: Vec<f64>, dt: f64, v_ref: [f64; 2]) -> Self {
        Self {
            x1: rollout(x1, &u1, dt),
            x2: rollout(x2, &u2, dt),
            u1,
            u2,
            v_ref,
        }
    }
}

/// Potential-game objective: per-step acceleration and speed-tracking costs
/// of both vehicles minus the shared log-distance reward.
pub fn mpc_objective(traj: &PredictedTrajectory, w: &MPCWeights, cfg: &MPCConfig) -> Result<f64> {
    let h = traj.u1.len();
    if traj.u2.len() != h || traj.x1.len() != h + 1 || traj.x2.len() != h + 1 {
        return input_err("trajectory needs H inputs and H+1 states per vehicle");
    }
    let mut total = 0.0;
    for k in 0..h {
        let (a1, a2) = (traj.u1[k], traj.u2[k]);
        let (s1, s2) = (traj.x1[k + 1], traj.x2[k + 1]);
        total += w.omega1[0] * a1 * a1 + w.omega1[1] * (s1.v - traj.v_ref[0]).powi(2);
        total += w.omega2[0] * a2 * a2 + w.omega2[1] * (s2.v - traj.v_ref[1]).powi(2);
        total -= w.omega12 * (s1.p * s1.p + s2.p * s2.p + cfg.eps).ln();
    }
    Ok(total)
}

/// Maximum braking that keeps the speed at or above `v_min`.
pub(crate) fn braking_profile(x0: VehicleState, h: usize, cfg: &MPCConfig) -> Vec<f64> {
    profile(x0, h, cfg, |v| cfg.u_min.max((cfg.v_min - v) / cfg.dt).min(0.0))
}

/// Maximum acceleration that keeps the speed at or below `v_max`.
pub(crate) fn full_throttle_profile(x0: VehicleState, h: usize, cfg: &MPCConfig) -> Vec<f64> {
    profile(x0, h, cfg, |v| cfg.u_max.min((cfg.v_max - v) / cfg.dt).max(0.0))
}

fn profile(x0: VehicleState, h: usize, cfg: &MPCConfig, rule: impl Fn(f64) -> f64) -> Vec<f64> {
    let mut s = x0;
    (0..h)
        .map(|_| {
            let a = rule(s.v).clamp(cfg.u_min, cfg.u_max);
            s = step_dynamics(s, a, cfg.dt);
            a
        })
        .collect()
}

#[derive(Debug, Clone)]
pub(crate) struct Controlled {
    pub x0: VehicleState,
    pub w_accel: f64,
    pub w_speed: f64,
    pub v_ref: f64,
}

/// Input-optimization problem over one or two controlled vehicles, optionally
/// interacting with a vehicle on a fixed predicted path.
#[derive(Debug, Clone)]
pub(crate) struct Problem {
    pub h: usize,
    pub dt: f64,
    pub vehicles: Vec<Controlled>,
    /// Positions `p_1..p_H` of an uncontrolled vehicle; empty when absent.
    pub fixed_path: Vec<f64>,
    pub w_shared: f64,
    /// Squared safety radius when the distance constraint is enforced.
    pub safety_r2: Option<f64>,
    pub v_min: f64,
    pub v_max: f64,
    pub eps: f64,
}

pub(crate) const FEASIBILITY_TOL: f64 = 1e-6;

impl Problem {
    pub fn n_vars(&self) -> usize {
        self.vehicles.len() * self.h
    }

    pub fn n_constraints(&self) -> usize {
        2 * self.n_vars() + self.safety_r2.map_or(0, |_| self.h)
    }

    fn rollout_all(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_vars();
        let (mut p, mut v) = (vec![0.0; n], vec![0.0; n]);
        for (i, veh) in self.vehicles.iter().enumerate() {
            let mut s = veh.x0;
            for k in 0..self.h {
                s = step_dynamics(s, x[i * self.h + k], self.dt);
                p[i * self.h + k] = s.p;
                v[i * self.h + k] = s.v;
            }
        }
        (p, v)
    }

    fn squared_distance(&self, p: &[f64], k: usize) -> f64 {
        let mut d: f64 = (0..self.vehicles.len()).map(|i| p[i * self.h + k].powi(2)).sum();
        if let Some(q) = self.fixed_path.get(k) {
            d += q * q;
        }
        d
    }

    /// Constraint values `c(x) <= 0`: per vehicle and step the upper then
    /// lower speed bound, then one normalized distance constraint per step.
    pub fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let (p, v) = self.rollout_all(x);
        let mut c = Vec::with_capacity(self.n_constraints());
        for vk in &v {
            c.push(vk - self.v_max);
            c.push(self.v_min - vk);
        }
        if let Some(r2) = self.safety_r2 {
            for k in 0..self.h {
                c.push(1.0 - self.squared_distance(&p, k) / r2);
            }
        }
        c
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        self.constraints(x).into_iter().fold(0.0, f64::max)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.merit(x, None, None)
    }

    /// Objective plus, when `al` is given, the augmented-Lagrangian terms
    /// `(max(0, λ + ρc)² − λ²) / 2ρ`. Fills `grad` when provided.
    pub fn merit(&self, x: &[f64], al: Option<(&[f64], f64)>, mut grad: Option<&mut [f64]>) -> f64 {
        let (h, dt) = (self.h, self.dt);
        let n = self.n_vars();
        let (p, v) = self.rollout_all(x);
        let want_grad = grad.is_some();
        let (mut gp, mut gv) = if want_grad {
            (vec![0.0; n], vec![0.0; n])
        } else {
            (Vec::new(), Vec::new())
        };
        if let Some(g) = grad.as_deref_mut() {
            g.fill(0.0);
        }

        let mut f = 0.0;
        for (i, veh) in self.vehicles.iter().enumerate() {
            for k in 0..h {
                let idx = i * h + k;
                let u = x[idx];
                let dv = v[idx] - veh.v_ref;
                f += veh.w_accel * u * u + veh.w_speed * dv * dv;
                if let Some(g) = grad.as_deref_mut() {
                    g[idx] += 2.0 * veh.w_accel * u;
                    gv[idx] += 2.0 * veh.w_speed * dv;
                }
            }
        }

        let mut ci = 0;
        if let Some((lam, rho)) = al {
            for idx in 0..n {
                for (c, sign) in [(v[idx] - self.v_max, 1.0), (self.v_min - v[idx], -1.0)] {
                    let s = (lam[ci] + rho * c).max(0.0);
                    f += (s * s - lam[ci] * lam[ci]) / (2.0 * rho);
                    if want_grad {
                        gv[idx] += sign * s;
                    }
                    ci += 1;
                }
            }
        }

        for k in 0..h {
            let d = self.squared_distance(&p, k);
            if self.w_shared > 0.0 {
                f -= self.w_shared * (d + self.eps).ln();
                if want_grad {
                    for i in 0..self.vehicles.len() {
                        gp[i * h + k] -= self.w_shared * 2.0 * p[i * h + k] / (d + self.eps);
                    }
                }
            }
            if let (Some(r2), Some((lam, rho))) = (self.safety_r2, al) {
                let c = 1.0 - d / r2;
                let s = (lam[ci] + rho * c).max(0.0);
                f += (s * s - lam[ci] * lam[ci]) / (2.0 * rho);
                if want_grad {
                    for i in 0..self.vehicles.len() {
                        gp[i * h + k] -= s * 2.0 * p[i * h + k] / r2;
                    }
                }
                ci += 1;
            }
        }

        // dv_{k+1}/du_j = dt and dp_{k+1}/du_j = dt²(k − j + ½) for j <= k.
        if let Some(g) = grad {
            for i in 0..self.vehicles.len() {
                let (mut sv, mut sp, mut r) = (0.0, 0.0, 0.0);
                for j in (0..h).rev() {
                    let idx = i * h + j;
                    r += sp;
                    sv += gv[idx];
                    sp += gp[idx];
                    g[idx] += dt * sv + dt * dt * (r + 0.5 * sp);
                }
            }
        }
        f
    }
}

/// Outcome of one augmented-Lagrangian solve.
#[derive(Debug, Clone)]
pub(crate) struct AlSolve {
    pub x: Vec<f64>,
    pub objective: f64,
    pub violation: f64,
    /// Multipliers and penalty of the last inner minimization.
    pub multipliers: Vec<f64>,
    pub rho: f64,
}

const RHO_START: f64 = 1e2;
const RHO_MAX: f64 = 1e3;
const AL_ROUNDS: usize = 40;
const INNER_GTOL_START: f64 = 1e-3;
const INNER_GTOL_END: f64 = 1e-9;

pub(crate) fn solve_al(problem: &Problem, x0: &[f64], lower: f64, upper: f64) -> AlSolve {
    let n = problem.n_vars();
    let lo = vec![lower; n];
    let hi = vec![upper; n];
    let mut lam = vec![0.0; problem.n_constraints()];
    let mut rho = RHO_START;
    let mut x: Vec<f64> = x0.iter().map(|v| v.clamp(lower, upper)).collect();
    let mut used = (lam.clone(), rho);
    let mut prev_violation = f64::INFINITY;
    // Inner solves start loose and tighten by a decade per round.
    let mut gtol = INNER_GTOL_START;
    for _ in 0..AL_ROUNDS {
        let opts = LbfgsOptions {
            max_iters: 1000,
            gtol,
            ftol: 0.0,
            ..LbfgsOptions::default()
        };
        let result = lbfgs_box(|u, g| problem.merit(u, Some((&lam, rho)), Some(g)), &x, &lo, &hi, &opts);
        x = result.x;
        used = (lam.clone(), rho);
        let c = problem.constraints(&x);
        let violation = c.iter().copied().fold(0.0, f64::max);
        let complementarity = c.iter().zip(&lam).map(|(ci, li)| (-ci).min(*li).abs()).fold(0.0, f64::max);
        let settled = violation <= 0.01 * FEASIBILITY_TOL && complementarity <= 1e-6;
        if problem.n_constraints() == 0 || (settled && gtol <= INNER_GTOL_END) {
            break;
        }
        gtol = (gtol * 0.1).max(INNER_GTOL_END);
        for (li, ci) in lam.iter_mut().zip(&c) {
            *li = (*li + rho * ci).max(0.0);
        }
        if violation > 0.25 * prev_violation {
            rho = (rho * 10.0).min(RHO_MAX);
        }
        prev_violation = violation;
    }
    AlSolve {
        objective: problem.objective(&x),
        violation: problem.violation(&x),
        x,
        multipliers: used.0,
        rho: used.1,
    }
}

/// Result of [`solve_mpc`].
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub u1: Vec<f64>,
    /// Predicted HDV inputs; empty when no HDV interacts.
    pub u2: Vec<f64>,
    /// Value of the (normalized-weight) objective.
    pub objective: f64,
    pub max_violation: f64,
    /// No feasible candidate was found; the inputs are the braking fallback.
    pub infeasible: bool,
    multipliers: Vec<f64>,
    rho: f64,
    /// Safety radius the returned plan was computed for.
    pub radius: f64,
}

impl MpcSolution {
    /// The penalized objective minimized in the final solver round, at `(u1, u2)`.
    /// Weights enter normalized by their maximum.
    pub fn penalized_objective(
        &self,
        x1: VehicleState,
        x2: Option<VehicleState>,
        w: &MPCWeights,
        cfg: &MPCConfig,
        u1: &[f64],
        u2: &[f64],
    ) -> f64 {
        let problem = cav_problem(x1, x2, w, cfg, [cfg.v_max, cfg.v_max], self.radius);
        let x: Vec<f64> = u1.iter().chain(u2).copied().collect();
        if self.multipliers.is_empty() {
            problem.objective(&x)
        } else {
            problem.merit(&x, Some((&self.multipliers, self.rho)), None)
        }
    }
}

pub(crate) fn cav_problem(
    x1: VehicleState,
    x2: Option<VehicleState>,
    w: &MPCWeights,
    cfg: &MPCConfig,
    v_ref: [f64; 2],
    radius: f64,
) -> Problem {
    let wn = w.normalized();
    let mut vehicles = vec![Controlled {
        x0: x1,
        w_accel: wn.omega1[0],
        w_speed: wn.omega1[1],
        v_ref: v_ref[0],
    }];
    if let Some(x2) = x2 {
        vehicles.push(Controlled {
            x0: x2,
            w_accel: wn.omega2[0],
            w_speed: wn.omega2[1],
            v_ref: v_ref[1],
        });
    }
    Problem {
        h: cfg.horizon,
        dt: cfg.dt,
        fixed_path: Vec::new(),
        w_shared: if x2.is_some() { wn.omega12 } else { 0.0 },
        safety_r2: x2.map(|_| radius * radius),
        vehicles,
        v_min: cfg.v_min,
        v_max: cfg.v_max,
        eps: cfg.eps,
    }
}

/// Coasting distance below which extra starts (CAV first, HDV first, full
/// braking) are tried, in multiples of the safety radius.
const MULTISTART_RADIUS: f64 = 3.0;

/// Receding-horizon solver carrying the previous solution as a warm start.
#[derive(Debug, Clone, Default)]
pub struct MpcController {
    previous: Option<Vec<f64>>,
}

impl MpcController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Solves the joint problem for the CAV and (when present) the
    /// interacting HDV. `v_ref` holds the reference speeds of both.
    pub fn solve(
        &mut self,
        x1: VehicleState,
        x2: Option<VehicleState>,
        w: &MPCWeights,
        cfg: &MPCConfig,
        v_ref: [f64; 2],
    ) -> Result<MpcSolution> {
        cfg.validate()?;
        w.validate()?;
        let finite = |s: &VehicleState| s.p.is_finite() && s.v.is_finite();
        if !finite(&x1) || !x2.as_ref().is_none_or(finite) {
            return input_err("vehicle states must be finite");
        }
        let h = cfg.horizon;
        let problem = cav_problem(x1, x2, w, cfg, v_ref, cfg.safety_radius);
        let n = problem.n_vars();

        let brake1 = braking_profile(x1, h, cfg);
        let go1 = full_throttle_profile(x1, h, cfg);
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(prev) = self.previous.take().filter(|p| p.len() == n) {
            let mut shifted = Vec::with_capacity(n);
            for i in 0..n / h {
                let seq = &prev[i * h..(i + 1) * h];
                shifted.extend_from_slice(&seq[1..]);
                shifted.push(seq[h - 1]);
            }
            starts.push(shifted);
        }
        starts.push(vec![0.0; n]);
        let fallback: Vec<f64> = match x2 {
            Some(x2) => {
                let brake2 = braking_profile(x2, h, cfg);
                let coast = problem.clone();
                let (p, _) = coast.rollout_all(&vec![0.0; n]);
                let close = (0..h).any(|k| coast.squared_distance(&p, k) < (MULTISTART_RADIUS * cfg.safety_radius).powi(2));
                if close {
                    let go2 = full_throttle_profile(x2, h, cfg);
                    starts.push(go1.iter().chain(&brake2).copied().collect());
                    starts.push(brake1.iter().chain(&go2).copied().collect());
                    starts.push(brake1.iter().chain(&brake2).copied().collect());
                }
                brake1.iter().chain(&brake2).copied().collect()
            }
            None => brake1.clone(),
        };

        // Plan with the margin when possible, otherwise with the bare radius.
        let radii = if x2.is_some() && cfg.planning_margin > 0.0 {
            vec![cfg.safety_radius + cfg.planning_margin, cfg.safety_radius]
        } else {
            vec![cfg.safety_radius]
        };
        let mut chosen = None;
        for &radius in &radii {
            let problem = cav_problem(x1, x2, w, cfg, v_ref, radius);
            let mut best: Option<AlSolve> = None;
            for start in &starts {
                let sol = solve_al(&problem, start, cfg.u_min, cfg.u_max);
                if sol.violation <= FEASIBILITY_TOL && best.as_ref().is_none_or(|b| sol.objective < b.objective) {
                    best = Some(sol);
                }
            }
            let fallback_feasible = problem.violation(&fallback) <= FEASIBILITY_TOL;
            if best.is_some() || fallback_feasible {
                chosen = Some((problem, best, radius));
                break;
            }
        }
        let (problem, best, radius) = chosen.unwrap_or_else(|| (problem, None, cfg.safety_radius));
        let fallback_violation = problem.violation(&fallback);
        let fallback_objective = problem.objective(&fallback);
        let fallback_wins = fallback_violation <= FEASIBILITY_TOL
            && best.as_ref().is_none_or(|b| fallback_objective < b.objective);
        let (x, objective, violation, multipliers, rho, infeasible) = match best {
            Some(b) if !fallback_wins => (b.x, b.objective, b.violation, b.multipliers, b.rho, false),
            other => (
                fallback,
                fallback_objective,
                fallback_violation,
                Vec::new(),
                0.0,
                other.is_none() && fallback_violation > FEASIBILITY_TOL,
            ),
        };
        if infeasible {
            log::debug!("no feasible MPC plan from x1={x1:?} x2={x2:?}; braking");
        }
        self.previous = Some(x.clone());
        let (u1, u2) = x.split_at(h);
        Ok(MpcSolution {
            u1: u1.to_vec(),
            u2: u2.to_vec(),
            objective,
            max_violation: violation,
            infeasible,
            multipliers,
            rho,
            radius,
        })
    }
}

/// Cold-start MPC solve with maximum-speed references for both vehicles.
pub fn solve_mpc(x1: VehicleState, x2: VehicleState, w: &MPCWeights, cfg: &MPCConfig) -> Result<MpcSolution> {
    MpcController::new().solve(x1, Some(x2), w, cfg, [cfg.v_max, cfg.v_max])
}

/// First action of the HDV's own receding-horizon problem: its acceleration
/// and speed-tracking costs plus the shared log-distance term, predicting the
/// CAV at constant velocity, subject to the speed bounds and the distance
/// constraint (with the planning margin, then without) against that prediction.
/// When no plan is feasible the least-violating one is used.
pub fn hdv_action(
    x1: VehicleState,
    x2: VehicleState,
    omega2: [f64; 2],
    omega12: f64,
    cfg: &MPCConfig,
) -> Result<f64> {
    hdv_action_with_reference(x1, x2, omega2, omega12, cfg, cfg.v_max)
}

pub(crate) fn hdv_action_with_reference(
    x1: VehicleState,
    x2: VehicleState,
    omega2: [f64; 2],
    omega12: f64,
    cfg: &MPCConfig,
    v_ref: f64,
) -> Result<f64> {
    cfg.validate()?;
    let m = omega2[0].max(omega2[1]).max(omega12);
    if !(omega2.iter().all(|w| *w > 0.0 && w.is_finite()) && omega12 > 0.0 && m.is_finite()) {
        return input_err("HDV weights must be finite and positive");
    }
    let h = cfg.hdv_horizon;
    let mut problem = Problem {
        h,
        dt: cfg.dt,
        vehicles: vec![Controlled {
            x0: x2,
            w_accel: omega2[0] / m,
            w_speed: omega2[1] / m,
            v_ref,
        }],
        fixed_path: (1..=h).map(|k| x1.p + k as f64 * cfg.dt * x1.v).collect(),
        w_shared: omega12 / m,
        safety_r2: None,
        v_min: cfg.v_min,
        v_max: cfg.v_max,
        eps: cfg.eps,
    };
    let starts = [
        vec![0.0; h],
        braking_profile(x2, h, cfg),
        full_throttle_profile(x2, h, cfg),
    ];
    let mut least_violating: Option<AlSolve> = None;
    for radius in [cfg.safety_radius + cfg.planning_margin, cfg.safety_radius] {
        problem.safety_r2 = Some(radius * radius);
        let mut best: Option<AlSolve> = None;
        for start in &starts {
            let sol = solve_al(&problem, start, cfg.u_min, cfg.u_max);
            if sol.violation <= FEASIBILITY_TOL {
                if best.as_ref().is_none_or(|b| sol.objective < b.objective) {
                    best = Some(sol);
                }
            } else if least_violating.as_ref().is_none_or(|b| sol.violation < b.violation) {
                least_violating = Some(sol);
            }
        }
        if let Some(b) = best {
            return Ok(b.x[0]);
        }
    }
    Ok(least_violating.map_or_else(|| braking_profile(x2, 1, cfg)[0], |b| b.x[0]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weights() -> MPCWeights {
        MPCWeights {
            omega1: [0.3, 1.2],
            omega2: [0.8, 0.5],
            omega12: 1.0,
        }
    }

    #[test]
    fn dynamics_examples() {
        assert_eq!(step_dynamics(VehicleState::new(0.0, 1.0), 0.0, 0.25), VehicleState::new(0.25, 1.0));
        assert_eq!(step_dynamics(VehicleState::new(0.0, 0.0), 2.0, 1.0), VehicleState::new(1.0, 2.0));
    }

    #[test]
    fn merit_gradient_matches_finite_differences() {
        let cfg = MPCConfig {
            horizon: 5,
            ..MPCConfig::default()
        };
        let problem = cav_problem(
            VehicleState::new(-6.0, 6.0),
            Some(VehicleState::new(-4.0, 5.0)),
            &weights(),
            &cfg,
            [10.0, 10.0],
            5.0,
        );
        let n = problem.n_vars();
        let x: Vec<f64> = (0..n).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.9).collect();
        let lam: Vec<f64> = (0..problem.n_constraints()).map(|i| (i % 3) as f64 * 0.4).collect();
        let mut g = vec![0.0; n];
        problem.merit(&x, Some((&lam, 7.0)), Some(&mut g));
        for i in 0..n {
            let h = 1e-6;
            let mut up = x.clone();
            let mut dn = x.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (problem.merit(&up, Some((&lam, 7.0)), None) - problem.merit(&dn, Some((&lam, 7.0)), None)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-5 * (1.0 + fd.abs()), "var {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn objective_only_shared_term_when_at_reference() {
        let cfg = MPCConfig {
            horizon: 1,
            ..MPCConfig::default()
        };
        let x1 = VehicleState::new(-1000.0 - 10.0 * 0.25, 10.0);
        let x2 = VehicleState::new(-10.0 * 0.25, 10.0);
        let traj = PredictedTrajectory::from_inputs(x1, x2, vec![0.0], vec![0.0], cfg.dt, [10.0, 10.0]);
        let value = mpc_objective(&traj, &weights(), &cfg).unwrap();
        assert!((value + (1e6f64 + 1e-3).ln()).abs() < 1e-9);
    }

    #[test]
    fn braking_profile_stops_at_min_speed() {
        let cfg = MPCConfig::default();
        let u = braking_profile(VehicleState::new(0.0, 3.0), 4, &cfg);
        let end = rollout(VehicleState::new(0.0, 3.0), &u, cfg.dt);
        assert!(end.iter().all(|s| s.v >= -1e-12));
        assert!(end.last().unwrap().v.abs() < 1e-12);
    }

    #[test]
    fn lone_cav_tracks_reference() {
        let cfg = MPCConfig::default();
        let mut ctl = MpcController::new();
        let sol = ctl
            .solve(VehicleState::new(-20.0, 5.0), None, &weights(), &cfg, [cfg.v_max, cfg.v_max])
            .unwrap();
        assert!(!sol.infeasible);
        assert!(sol.u2.is_empty());
        assert!(sol.u1[0] > 0.0);
    }

    #[test]
    fn hdv_clears_the_conflict_zone_instead_of_stopping_in_it() {
        let cfg = MPCConfig::default();
        let cav = VehicleState::new(-2.9, 0.0);
        let hdv = VehicleState::new(3.5, 0.0);
        assert!(hdv_action(cav, hdv, [1.0, 1.0], 1.0, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn hdv_yields_to_a_cav_it_cannot_beat() {
        let cfg = MPCConfig::default();
        let a = hdv_action(VehicleState::new(-3.0, 8.0), VehicleState::new(-8.0, 6.0), [1.0, 1.0], 1.0, &cfg).unwrap();
        assert!(a < 0.0);
    }
}
