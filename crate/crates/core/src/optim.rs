//! Small box-constrained optimizers shared by hyperparameter training,
//! acquisition maximization, context selection and the MPC solver.

use rand::seq::SliceRandom;
use rand::Rng;

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub max_iters: usize,
    pub history: usize,
    /// Stop when the projected gradient's infinity norm falls below this.
    pub gtol: f64,
    /// Stop when the relative objective decrease falls below this.
    pub ftol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            history: 8,
            gtol: 1e-8,
            ftol: 1e-13,
        }
    }
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*lo, *hi);
    }
}

/// Gradient components that can move without leaving the box.
fn free_mask(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> Vec<bool> {
    x.iter()
        .enumerate()
        .map(|(i, &xi)| !((xi <= lower[i] && g[i] > 0.0) || (xi >= upper[i] && g[i] < 0.0)))
        .collect()
}

/// Projected-gradient infinity norm, the first-order optimality measure on a box.
pub fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    free_mask(x, g, lower, upper)
        .iter()
        .zip(g)
        .filter(|(free, _)| **free)
        .map(|(_, gi)| gi.abs())
        .fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected limited-memory BFGS on a box.
///
/// `f` writes the gradient into its second argument and returns the value.
/// Non-finite values are treated as infeasible and rejected by the line search.
pub fn lbfgs_box<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }

    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.history);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.history);
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        if projected_gradient_norm(&x, &g, lower, upper) <= opts.gtol {
            converged = true;
            break;
        }
        iterations += 1;
        let free = free_mask(&x, &g, lower, upper);

        // Two-loop recursion restricted to the free variables.
        let mut d: Vec<f64> = g.iter().zip(&free).map(|(gi, fr)| if *fr { *gi } else { 0.0 }).collect();
        let m = s_hist.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &d);
            for (dj, yj) in d.iter_mut().zip(&y_hist[i]) {
                *dj -= alpha[i] * yj;
            }
        }
        if m > 0 {
            let gamma = dot(&s_hist[m - 1], &y_hist[m - 1]) / dot(&y_hist[m - 1], &y_hist[m - 1]);
            d.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..m {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &d);
            for (dj, sj) in d.iter_mut().zip(&s_hist[i]) {
                *dj += (alpha[i] - beta) * sj;
            }
        }
        for (dj, fr) in d.iter_mut().zip(&free) {
            *dj = if *fr { -*dj } else { 0.0 };
        }
        if dot(&d, &g) >= 0.0 {
            s_hist.clear();
            y_hist.clear();
            for (dj, (gi, fr)) in d.iter_mut().zip(g.iter().zip(&free)) {
                *dj = if *fr { -gi } else { 0.0 };
            }
        }

        let mut t = if s_hist.is_empty() {
            let dmax = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            if dmax > 1.0 {
                1.0 / dmax
            } else {
                1.0
            }
        } else {
            1.0
        };

        let mut accepted = false;
        let mut f_new = f64::INFINITY;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + t * d[i];
            }
            project(&mut x_new, lower, upper);
            let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if decrease >= 0.0 {
                // Projection killed the descent; nothing left along this ray.
                t *= 0.5;
                continue;
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * decrease {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            if s_hist.is_empty() {
                break;
            }
            s_hist.clear();
            y_hist.clear();
            continue;
        }

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).max(1e-300) {
            if s_hist.len() == opts.history {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }

        let decrease = fx - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if decrease <= opts.ftol * fx.abs().max(1.0) {
            converged = projected_gradient_norm(&x, &g, lower, upper) <= opts.gtol.sqrt();
            break;
        }
    }

    Minimum {
        x,
        value: fx,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone)]
pub struct PatternOptions {
    /// Initial poll radius as a fraction of each axis width.
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evals: usize,
}

impl Default for PatternOptions {
    fn default() -> Self {
        Self {
            initial_step: 0.125,
            min_step: 1e-7,
            max_evals: 2000,
        }
    }
}

/// Derivative-free compass search on a box. Minimizes `f`.
///
/// Polls `x ± step·e_i` in axis order and moves to the best strictly improving
/// point; halves the step when no poll improves.
pub fn pattern_search<F>(mut f: F, x0: &[f64], lower: &[f64], upper: &[f64], opts: &PatternOptions) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let mut fx = f(&x);
    let mut evals = 1;
    let mut step = opts.initial_step;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];

    while step >= opts.min_step && evals < opts.max_evals {
        iterations += 1;
        let mut best: Option<(Vec<f64>, f64)> = None;
        'poll: for axis in 0..n {
            for sign in [1.0, -1.0] {
                trial.copy_from_slice(&x);
                let width = upper[axis] - lower[axis];
                trial[axis] = (x[axis] + sign * step * width).clamp(lower[axis], upper[axis]);
                if trial[axis] == x[axis] {
                    continue;
                }
                let ft = f(&trial);
                evals += 1;
                let incumbent = best.as_ref().map_or(fx, |b| b.1);
                if ft < incumbent {
                    best = Some((trial.clone(), ft));
                }
                if evals >= opts.max_evals {
                    break 'poll;
                }
            }
        }
        match best {
            Some((xb, fb)) => {
                x = xb;
                fx = fb;
            }
            None => step *= 0.5,
        }
    }

    Minimum {
        x,
        value: fx,
        iterations,
        converged: step < opts.min_step,
    }
}

/// Regular grid over `[0,1]^dim`, first axis varying slowest.
pub fn unit_grid(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    assert!(per_axis >= 2, "grid needs at least two points per axis");
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|mut idx| {
            let mut point = vec![0.0; dim];
            for axis in (0..dim).rev() {
                point[axis] = (idx % per_axis) as f64 / (per_axis - 1) as f64;
                idx /= per_axis;
            }
            point
        })
        .collect()
}

/// Latin-hypercube sample of `n` points in `[0,1]^dim`.
pub fn latin_hypercube<R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut points = vec![vec![0.0; dim]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for axis in 0..dim {
        strata.shuffle(rng);
        for (point, s) in points.iter_mut().zip(&strata) {
            point[axis] = (*s as f64 + rng.random::<f64>()) / n as f64;
        }
    }
    points
}

/// Settings for global maximization over the unit box by screening plus
/// multi-start compass search.
#[derive(Debug, Clone)]
pub struct MultiStartOptions {
    /// Screening grid resolution, used while `per_axis^dim <= screening_budget`.
    pub screening_per_axis: usize,
    /// Upper bound on screening evaluations; uniform random screening above it.
    pub screening_budget: usize,
    /// Best screened points that seed a local search.
    pub screened_starts: usize,
    /// Latin-hypercube seeds.
    pub random_starts: usize,
    pub pattern: PatternOptions,
}

impl Default for MultiStartOptions {
    fn default() -> Self {
        Self {
            screening_per_axis: 51,
            screening_budget: 5000,
            screened_starts: 3,
            random_starts: 10,
            pattern: PatternOptions::default(),
        }
    }
}

/// Maximizes `f` over `[0,1]^dim`.
///
/// Starts are tried in order: box center, `extra_starts`, best screened points,
/// Latin-hypercube seeds. A later start replaces the incumbent only on strict
/// improvement, so ties resolve to the earliest start.
pub fn maximize_unit_box<F, R>(
    mut f: F,
    dim: usize,
    extra_starts: &[Vec<f64>],
    opts: &MultiStartOptions,
    rng: &mut R,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let lower = vec![0.0; dim];
    let upper = vec![1.0; dim];

    let screening: Vec<Vec<f64>> = match opts.screening_per_axis.checked_pow(dim as u32) {
        Some(total) if total <= opts.screening_budget && opts.screening_per_axis >= 2 => {
            unit_grid(dim, opts.screening_per_axis)
        }
        _ => (0..opts.screening_budget)
            .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
            .collect(),
    };
    let mut scored: Vec<(usize, f64)> = screening
        .iter()
        .enumerate()
        .map(|(i, p)| (i, f(p)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let mut starts: Vec<Vec<f64>> = vec![vec![0.5; dim]];
    starts.extend(extra_starts.iter().map(|s| {
        let mut s = s.clone();
        project(&mut s, &lower, &upper);
        s
    }));
    starts.extend(
        scored
            .iter()
            .take(opts.screened_starts)
            .map(|(i, _)| screening[*i].clone()),
    );
    starts.extend(latin_hypercube(opts.random_starts, dim, rng));

    let mut best_x = starts[0].clone();
    let mut best_v = f64::NEG_INFINITY;
    for start in &starts {
        let local = pattern_search(|x| -f(x), start, &lower, &upper, &opts.pattern);
        let value = -local.value;
        if value > best_v {
            best_v = value;
            best_x = local.x;
        }
    }
    (best_x, best_v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let m = lbfgs_box(rosenbrock, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &LbfgsOptions::default());
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{:?}", m.x);
    }

    #[test]
    fn lbfgs_respects_active_bounds() {
        // minimum of (x-3)^2 + (y+1)^2 on [0,2]x[0,2] is (2, 0)
        let f = |x: &[f64], g: &mut [f64]| {
            g[0] = 2.0 * (x[0] - 3.0);
            g[1] = 2.0 * (x[1] + 1.0);
            (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2)
        };
        let m = lbfgs_box(f, &[1.0, 1.0], &[0.0, 0.0], &[2.0, 2.0], &LbfgsOptions::default());
        assert!(m.converged);
        assert_eq!(m.x, vec![2.0, 0.0]);
    }

    #[test]
    fn pattern_search_finds_interior_minimum() {
        let m = pattern_search(
            |x| (x[0] - 0.3).powi(2) + 2.0 * (x[1] - 0.7).powi(2),
            &[0.5, 0.5],
            &[0.0, 0.0],
            &[1.0, 1.0],
            &PatternOptions::default(),
        );
        assert!((m.x[0] - 0.3).abs() < 1e-6 && (m.x[1] - 0.7).abs() < 1e-6);
    }

    #[test]
    fn grid_orders_first_axis_slowest() {
        let g = unit_grid(2, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[1], vec![0.0, 0.5]);
        assert_eq!(g[3], vec![0.5, 0.0]);
    }

    #[test]
    fn latin_hypercube_hits_every_stratum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts = latin_hypercube(7, 2, &mut rng);
        for axis in 0..2 {
            let mut strata: Vec<usize> = pts.iter().map(|p| (p[axis] * 7.0) as usize).collect();
            strata.sort();
            assert_eq!(strata, (0..7).collect::<Vec<_>>());
        }
    }

    #[test]
    fn constant_objective_returns_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (x, v) = maximize_unit_box(|_| 1.0, 2, &[], &MultiStartOptions::default(), &mut rng);
        assert_eq!(x, vec![0.5, 0.5]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn multistart_beats_reference_grid() {
        let f = |x: &[f64]| (8.0 * x[0]).sin() * (5.0 * x[1]).cos() - (x[0] - 0.6).powi(2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, best) = maximize_unit_box(f, 2, &[], &MultiStartOptions::default(), &mut rng);
        let grid_best = unit_grid(2, 51).iter().map(|p| f(p)).fold(f64::NEG_INFINITY, f64::max);
        assert!(best >= grid_best - 1e-6);
    }
}
