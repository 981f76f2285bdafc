use std::io::Write;

use super::config::{MPCConfig, MPCWeights, SimConfig, SpeedReference, VehicleState};
use super::mpc::{hdv_action_with_reference, step_dynamics, MpcController};
use crate::error::{input_err, Result};

const DEFAULT_HEADWAY: f64 = 1.5;
const DEFAULT_STANDSTILL_GAP: f64 = 5.0;

/// Closed-loop record of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    /// Sample times `0, dt, 2dt, ...`, one per stored state.
    pub times: Vec<f64>,
    pub cav: Vec<VehicleState>,
    /// Applied CAV accelerations, one per step (one fewer than states).
    pub cav_accel: Vec<f64>,
    pub hdvs: Vec<Vec<VehicleState>>,
    pub hdv_accels: Vec<Vec<f64>>,
    /// Interpolated time at which the CAV reaches the exit position, or the time cap.
    pub exit_time: f64,
    /// `max_k r² − (p_1² + p_2²)` over the realized trajectory; negative is safe.
    pub coll_margin: f64,
    /// `∫ a_1² dt` up to the exit time.
    pub accel_integral: f64,
    pub timed_out: bool,
    /// Steps at which the MPC found no feasible plan and braked.
    pub infeasible_steps: usize,
}

impl ScenarioOutcome {
    pub fn is_safe(&self) -> bool {
        self.coll_margin < 0.0
    }

    /// Writes `t,p1,v1,a1,p2,v2,a2,...`; the final row has empty accelerations.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string(), "p1".into(), "v1".into(), "a1".into()];
        for j in 0..self.hdvs.len() {
            let i = j + 2;
            header.extend([format!("p{i}"), format!("v{i}"), format!("a{i}")]);
        }
        w.write_record(&header)?;
        let accel = |seq: &[f64], k: usize| seq.get(k).map_or(String::new(), |a| a.to_string());
        for (k, t) in self.times.iter().enumerate() {
            let mut row = vec![
                t.to_string(),
                self.cav[k].p.to_string(),
                self.cav[k].v.to_string(),
                accel(&self.cav_accel, k),
            ];
            for (states, accels) in self.hdvs.iter().zip(&self.hdv_accels) {
                row.extend([states[k].p.to_string(), states[k].v.to_string(), accel(accels, k)]);
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Index of the HDV closest upstream of the conflict point (largest negative
/// position); `None` when every HDV has crossed.
pub fn select_active_hdv(hdvs: &[VehicleState]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, s) in hdvs.iter().enumerate() {
        if s.p < 0.0 && best.is_none_or(|b| s.p > hdvs[b].p) {
            best = Some(i);
        }
    }
    best
}

/// Clamps an acceleration to the input bounds and to what keeps the next
/// speed within the speed bounds.
pub(crate) fn applied_accel(a: f64, v: f64, cfg: &MPCConfig) -> f64 {
    let lo = cfg.u_min.max((cfg.v_min - v) / cfg.dt);
    let hi = cfg.u_max.min((cfg.v_max - v) / cfg.dt);
    if lo > hi {
        // speed already outside its bounds; move back toward them
        return if v > cfg.v_max { cfg.u_min.max(lo.min(0.0)) } else { hi.min(cfg.u_max) };
    }
    a.clamp(lo, hi)
}

/// Time within `[0, dt]` at which `p + vτ + ½aτ² = target`.
fn crossing_time(s: VehicleState, a: f64, target: f64, dt: f64) -> f64 {
    let gap = target - s.p;
    if gap <= 0.0 {
        return 0.0;
    }
    let disc = (s.v * s.v + 2.0 * a * gap).max(0.0);
    let denom = s.v + disc.sqrt();
    if denom <= 0.0 {
        return dt;
    }
    (2.0 * gap / denom).clamp(0.0, dt)
}

fn reference_speed(cfg: &MPCConfig, own: VehicleState, leader: Option<VehicleState>) -> f64 {
    let (headway, gap0) = match cfg.v_ref_policy {
        SpeedReference::CarFollowing {
            time_headway,
            standstill_gap,
        } => (time_headway, standstill_gap),
        SpeedReference::MaxSpeed => (DEFAULT_HEADWAY, DEFAULT_STANDSTILL_GAP),
    };
    match leader {
        Some(l) => ((l.p - own.p - gap0) / headway).clamp(cfg.v_min, cfg.v_max),
        None => cfg.v_max,
    }
}

/// Nearest HDV ahead of HDV `i` in its lane.
fn leader_of(hdvs: &[VehicleState], i: usize) -> Option<VehicleState> {
    hdvs.iter()
        .enumerate()
        .filter(|(j, s)| *j != i && s.p > hdvs[i].p)
        .min_by(|a, b| a.1.p.total_cmp(&b.1.p))
        .map(|(_, s)| *s)
}

/// One closed-loop episode with a single HDV. The CAV applies the first input
/// of its joint MPC plan (weights `10^z` for itself, `10^θ` for the HDV); the
/// HDV acts through its own receding-horizon model.
pub fn simulate_episode(init: [VehicleState; 2], z: &[f64], theta: &[f64], cfg: &SimConfig) -> Result<ScenarioOutcome> {
    run_episode(init[0], vec![init[1]], z, theta, cfg, false)
}

/// Episode with several HDVs in one lane. The CAV interacts only with the
/// HDV selected by [`select_active_hdv`]; trailing HDVs follow their leader
/// with a constant-time-headway reference speed.
pub fn simulate_multi_hdv_episode(
    cav: VehicleState,
    hdvs: Vec<VehicleState>,
    z: &[f64],
    theta: &[f64],
    cfg: &SimConfig,
) -> Result<ScenarioOutcome> {
    if hdvs.is_empty() {
        return input_err("at least one HDV is required");
    }
    run_episode(cav, hdvs, z, theta, cfg, true)
}

fn run_episode(
    cav: VehicleState,
    hdvs: Vec<VehicleState>,
    z: &[f64],
    theta: &[f64],
    cfg: &SimConfig,
    select_hdv: bool,
) -> Result<ScenarioOutcome> {
    cfg.validate()?;
    let w = MPCWeights::from_log10(z, theta)?;
    let mpc = &cfg.mpc;
    let sc = &cfg.scenario;
    let all_finite = std::iter::once(&cav).chain(&hdvs).all(|s| s.p.is_finite() && s.v.is_finite());
    if !all_finite {
        return input_err("initial states must be finite");
    }
    let r2 = mpc.safety_radius * mpc.safety_radius;
    let margin = |x1: VehicleState, others: &[VehicleState]| {
        others
            .iter()
            .map(|s| r2 - (x1.p * x1.p + s.p * s.p))
            .fold(f64::NEG_INFINITY, f64::max)
    };

    let mut out = ScenarioOutcome {
        times: vec![0.0],
        cav: vec![cav],
        cav_accel: Vec::new(),
        hdvs: hdvs.iter().map(|s| vec![*s]).collect(),
        hdv_accels: vec![Vec::new(); hdvs.len()],
        exit_time: sc.time_cap,
        coll_margin: margin(cav, &hdvs),
        accel_integral: 0.0,
        timed_out: true,
        infeasible_steps: 0,
    };
    let mut controller = MpcController::new();
    let (mut x1, mut others) = (cav, hdvs);
    let max_steps = (sc.time_cap / mpc.dt).ceil() as usize;
    let mut active_prev = None;
    for step in 0..max_steps {
        let t = step as f64 * mpc.dt;
        let active = if select_hdv { select_active_hdv(&others) } else { Some(0) };
        if active != active_prev {
            controller.reset();
            active_prev = active;
        }
        let refs: Vec<f64> = (0..others.len())
            .map(|i| {
                let leader = if select_hdv { leader_of(&others, i) } else { None };
                reference_speed(mpc, others[i], leader)
            })
            .collect();
        let x2 = active.map(|i| others[i]);
        let v_ref2 = active.map_or(mpc.v_max, |i| refs[i]);
        let plan = controller.solve(x1, x2, &w, mpc, [mpc.v_max, v_ref2])?;
        if plan.infeasible {
            out.infeasible_steps += 1;
        }
        let a1 = applied_accel(plan.u1[0], x1.v, mpc);
        let mut next_others = Vec::with_capacity(others.len());
        for (i, s) in others.iter().enumerate() {
            let a = hdv_action_with_reference(x1, *s, w.omega2, w.omega12, mpc, refs[i])?;
            let a = applied_accel(a, s.v, mpc);
            out.hdv_accels[i].push(a);
            next_others.push(step_dynamics(*s, a, mpc.dt));
        }
        let next1 = step_dynamics(x1, a1, mpc.dt);
        out.cav_accel.push(a1);

        let remaining = sc.time_cap - t;
        if next1.p >= sc.exit_position {
            let tau = crossing_time(x1, a1, sc.exit_position, mpc.dt).min(remaining);
            out.accel_integral += a1 * a1 * tau;
            out.exit_time = t + tau;
            out.timed_out = false;
        } else {
            out.accel_integral += a1 * a1 * mpc.dt.min(remaining);
        }
        x1 = next1;
        others = next_others;
        out.times.push(t + mpc.dt);
        out.cav.push(x1);
        for (hist, s) in out.hdvs.iter_mut().zip(&others) {
            hist.push(*s);
        }
        out.coll_margin = out.coll_margin.max(margin(x1, &others));
        if !out.timed_out {
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn active_hdv_selection() {
        let s = |p: f64| VehicleState::new(p, 5.0);
        assert_eq!(select_active_hdv(&[s(-10.0), s(-25.0)]), Some(0));
        assert_eq!(select_active_hdv(&[s(3.0), s(-25.0)]), Some(1));
        assert_eq!(select_active_hdv(&[s(3.0), s(8.0)]), None);
    }

    #[test]
    fn crossing_time_constant_speed() {
        let tau = crossing_time(VehicleState::new(14.0, 8.0), 0.0, 15.0, 0.25);
        assert!((tau - 0.125).abs() < 1e-15);
    }

    #[test]
    fn applied_accel_respects_speed_bounds() {
        let cfg = MPCConfig::default();
        assert_eq!(applied_accel(3.0, 9.9, &cfg), (10.0 - 9.9) / 0.25);
        assert_eq!(applied_accel(-5.0, 0.5, &cfg), -2.0);
        assert_eq!(applied_accel(1.0, 5.0, &cfg), 1.0);
    }
}
