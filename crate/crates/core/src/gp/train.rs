//! Hyperparameter training by log-marginal-likelihood maximization.
//!
//! Parameters are optimized in log space, `[log ℓ_1..log ℓ_D, log σ_f², log σ_n²]`,
//! with a multi-start projected L-BFGS. The first start is the caller's guess.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::linalg::{cholesky_inverse, cholesky_log_det, cholesky_solve, cholesky_with_jitter};
use super::regressor::{covariance, scale_input, Dataset, GPRegressor, OutputScaling};
use crate::domain::BoxDomain;
use crate::error::{input_err, Result};
use crate::optim::{lbfgs_box, LbfgsOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    Learned,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Random restarts in addition to the initial guess.
    pub restarts: usize,
    pub max_iters: usize,
    /// Lengthscale bounds as multiples of each input's range.
    pub lengthscale_bounds: (f64, f64),
    pub signal_variance_bounds: (f64, f64),
    pub noise_variance_bounds: (f64, f64),
    pub initial_noise_variance: f64,
    pub noise: NoiseMode,
    pub standardize_outputs: bool,
    /// When set, inputs are mapped onto this box's unit cube before kernel evaluation.
    pub input_domain: Option<BoxDomain>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            restarts: 4,
            max_iters: 200,
            lengthscale_bounds: (1e-2, 1e2),
            signal_variance_bounds: (1e-4, 1e4),
            noise_variance_bounds: (1e-8, 1.0),
            initial_noise_variance: 1e-2,
            noise: NoiseMode::Learned,
            standardize_outputs: true,
            input_domain: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("lengthscale", self.lengthscale_bounds),
            ("signal variance", self.signal_variance_bounds),
            ("noise variance", self.noise_variance_bounds),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return input_err(format!("{name} bounds must satisfy 0 < lower <= upper, got [{lo}, {hi}]"));
            }
        }
        if let NoiseMode::Fixed(v) = self.noise {
            if !(v.is_finite() && v >= 0.0) {
                return input_err(format!("fixed noise variance must be nonnegative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Per-input ranges used to scale lengthscale bounds.
pub(crate) fn input_ranges(xs: &[Vec<f64>], dim: usize, normalized: bool) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            if normalized {
                return 1.0;
            }
            let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
                (lo.min(x[d]), hi.max(x[d]))
            });
            if hi > lo {
                hi - lo
            } else {
                1.0
            }
        })
        .collect()
}

/// Initial guess followed by `restarts` uniform draws inside the log-space box.
pub(crate) fn starting_points(
    initial: &[f64],
    lower: &[f64],
    upper: &[f64],
    restarts: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let mut starts = vec![initial
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect::<Vec<_>>()];
    for _ in 0..restarts {
        starts.push(
            lower
                .iter()
                .zip(upper)
                .map(|(lo, hi)| lo + rng.random::<f64>() * (hi - lo))
                .collect(),
        );
    }
    starts
}

/// Log marginal likelihood of internal-unit outputs `y` and its gradient with
/// respect to the log-parameters. `None` when the covariance cannot be factored.
pub(crate) fn lml_and_grad(
    template: &KernelSpec,
    xs: &[Vec<f64>],
    y: &DVector<f64>,
    params: &[f64],
    fixed_noise: Option<f64>,
) -> Option<(f64, Vec<f64>)> {
    let dim = template.input_dim();
    let lengthscales: Vec<f64> = params[..dim].iter().map(|p| p.exp()).collect();
    let signal = params[dim].exp();
    let noise = fixed_noise.unwrap_or_else(|| params[dim + 1].exp());
    let kernel = template.with_hyperparameters(lengthscales, signal).ok()?;

    let n = xs.len();
    let c = covariance(&kernel, xs, noise);
    let (l, _) = cholesky_with_jitter(&c, signal).ok()?;
    let alpha = cholesky_solve(&l, y);
    let lml = -0.5 * y.dot(&alpha) - 0.5 * cholesky_log_det(&l) - 0.5 * n as f64 * LN_2PI;

    // W = ααᵀ − C⁻¹ ; ∂ℓ/∂φ = ½ tr(W ∂C/∂φ)
    let mut w: DMatrix<f64> = -cholesky_inverse(&l);
    w.ger(1.0, &alpha, &alpha, 1.0);

    let mut grad = vec![0.0; params.len()];
    let mut dk = vec![0.0; dim];
    let mut signal_term = 0.0;
    for i in 0..n {
        for j in 0..i {
            let k = c[(j, i)];
            kernel.lengthscale_grad_from_value(&xs[i], &xs[j], k, &mut dk);
            let wij = w[(j, i)];
            for d in 0..dim {
                grad[d] += wij * dk[d];
            }
            signal_term += wij * k;
        }
    }
    // pairs above were counted once; the symmetric half doubles them, then ½.
    let diag_signal: f64 = (0..n).map(|i| w[(i, i)]).sum::<f64>();
    grad[dim] = signal_term + 0.5 * diag_signal * signal;
    if fixed_noise.is_none() {
        grad[dim + 1] = 0.5 * noise * diag_signal;
    }
    Some((lml, grad))
}

/// Fits kernel and noise hyperparameters to `data` by maximizing the log
/// marginal likelihood, starting from `spec`'s hyperparameters.
pub fn gp_fit(data: &Dataset, spec: &KernelSpec, cfg: &TrainConfig) -> Result<GPRegressor> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return input_err("cannot fit a GP to an empty dataset");
    }
    if data.input_dim() != spec.input_dim() {
        return input_err(format!(
            "kernel is {}-dimensional but data is {}-dimensional",
            spec.input_dim(),
            data.input_dim()
        ));
    }
    let dim = spec.input_dim();
    let xs: Vec<Vec<f64>> = data
        .inputs()
        .iter()
        .map(|x| scale_input(&cfg.input_domain, x))
        .collect();
    let scaling = if cfg.standardize_outputs {
        OutputScaling::standardizing(data.outputs())
    } else {
        OutputScaling::identity()
    };
    let y = DVector::from_iterator(data.len(), data.outputs().iter().map(|v| scaling.to_internal(*v)));

    let ranges = input_ranges(&xs, dim, cfg.input_domain.is_some());
    let fixed_noise = match cfg.noise {
        NoiseMode::Fixed(v) => Some(v),
        NoiseMode::Learned => None,
    };
    let mut lower: Vec<f64> = ranges.iter().map(|r| (cfg.lengthscale_bounds.0 * r).ln()).collect();
    let mut upper: Vec<f64> = ranges.iter().map(|r| (cfg.lengthscale_bounds.1 * r).ln()).collect();
    lower.push(cfg.signal_variance_bounds.0.ln());
    upper.push(cfg.signal_variance_bounds.1.ln());
    let mut initial: Vec<f64> = spec.lengthscales().iter().map(|l| l.ln()).collect();
    initial.push(spec.signal_variance().ln());
    if fixed_noise.is_none() {
        lower.push(cfg.noise_variance_bounds.0.ln());
        upper.push(cfg.noise_variance_bounds.1.ln());
        initial.push(cfg.initial_noise_variance.ln());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let starts = starting_points(&initial, &lower, &upper, cfg.restarts, &mut rng);
    let opts = LbfgsOptions {
        max_iters: cfg.max_iters,
        ..LbfgsOptions::default()
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in &starts {
        let result = lbfgs_box(
            |p, g| match lml_and_grad(spec, &xs, &y, p, fixed_noise) {
                Some((v, gr)) => {
                    for (gi, gri) in g.iter_mut().zip(gr) {
                        *gi = -gri;
                    }
                    -v
                }
                None => f64::INFINITY,
            },
            start,
            &lower,
            &upper,
            &opts,
        );
        if result.value.is_finite() && best.as_ref().is_none_or(|b| result.value < b.1) {
            best = Some((result.x, result.value));
        }
    }
    let (params, _) = best.ok_or_else(|| {
        crate::Error::Numerical("no hyperparameter start produced a factorable covariance".into())
    })?;

    let lengthscales = bounded_lengthscales(&params[..dim], &ranges, cfg.lengthscale_bounds);
    let signal = params[dim].exp().clamp(cfg.signal_variance_bounds.0, cfg.signal_variance_bounds.1);
    let kernel = spec.with_hyperparameters(lengthscales, signal)?;
    let noise = match fixed_noise {
        Some(v) => v,
        None => (params[dim + 1].exp()).clamp(cfg.noise_variance_bounds.0, cfg.noise_variance_bounds.1),
    };
    GPRegressor::from_parts(data.clone(), kernel, noise, cfg.input_domain.clone(), scaling)
}

/// Lengthscales from log values, clamped so values on a bound survive the
/// log round trip.
pub(crate) fn bounded_lengthscales(log_ls: &[f64], ranges: &[f64], bounds: (f64, f64)) -> Vec<f64> {
    log_ls
        .iter()
        .zip(ranges)
        .map(|(v, r)| v.exp().clamp(bounds.0 * r, bounds.1 * r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::kernel::StationaryKind;

    fn toy() -> (Vec<Vec<f64>>, DVector<f64>) {
        let xs = vec![vec![0.1, 0.2], vec![0.5, 0.9], vec![0.8, 0.4], vec![0.3, 0.6], vec![0.95, 0.05]];
        let y = DVector::from_vec(vec![0.3, -1.2, 0.8, 0.1, 1.5]);
        (xs, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (xs, y) = toy();
        let template = KernelSpec::product_pair(
            StationaryKind::Matern32,
            1,
            StationaryKind::SquaredExponential,
            1,
            vec![1.0, 1.0],
            1.0,
        )
        .unwrap();
        let p = vec![(0.4f64).ln(), (0.7f64).ln(), (1.3f64).ln(), (0.05f64).ln()];
        let (_, g) = lml_and_grad(&template, &xs, &y, &p, None).unwrap();
        for i in 0..p.len() {
            let h = 1e-6;
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (lml_and_grad(&template, &xs, &y, &up, None).unwrap().0
                - lml_and_grad(&template, &xs, &y, &dn, None).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn lml_matches_regressor() {
        let (xs, y) = toy();
        let template = KernelSpec::matern32(vec![1.0, 1.0], 1.0).unwrap();
        let p = vec![(0.3f64).ln(), (0.5f64).ln(), (2.0f64).ln(), (0.1f64).ln()];
        let (lml, _) = lml_and_grad(&template, &xs, &y, &p, None).unwrap();
        let data = Dataset::new(xs, y.iter().copied().collect()).unwrap();
        let gp = GPRegressor::new(data, KernelSpec::matern32(vec![0.3, 0.5], 2.0).unwrap(), 0.1).unwrap();
        assert!((lml - gp.log_marginal_likelihood()).abs() < 1e-12);
    }

    #[test]
    fn empty_data_is_rejected() {
        let k = KernelSpec::matern32(vec![1.0], 1.0).unwrap();
        assert!(gp_fit(&Dataset::empty(1), &k, &TrainConfig::default()).is_err());
    }

    #[test]
    fn single_zero_observation_predicts_zero() {
        let data = Dataset::new(vec![vec![0.0]], vec![0.0]).unwrap();
        let k = KernelSpec::matern32(vec![1.0], 1.0).unwrap();
        let cfg = TrainConfig::default();
        let gp = gp_fit(&data, &k, &cfg).unwrap();
        let l = gp.kernel().lengthscales()[0];
        assert!((1e-2..=1e2).contains(&l));
        assert!((1e-4..=1e4).contains(&gp.kernel().signal_variance()));
        assert!((1e-8..=1.0).contains(&gp.noise_variance()));
        for q in [-10.0, 0.0, 0.3, 7.0] {
            assert_eq!(gp.predict_mean(&[q]).unwrap(), 0.0);
        }
    }
}
