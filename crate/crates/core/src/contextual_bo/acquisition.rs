use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::surrogate::SurrogateModel;
use crate::domain::BoxDomain;
use crate::error::{input_err, Result};
use crate::optim::{maximize_unit_box, MultiStartOptions, PatternOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AcquisitionConfig {
    /// Exploration weight; UCB uses `sqrt(beta)`.
    pub beta: f64,
    /// Latin-hypercube restarts of the local search.
    pub restarts: usize,
    pub screening_per_axis: usize,
    pub screening_budget: usize,
    pub screened_starts: usize,
    /// Evaluation budget per local search.
    pub local_max_evals: usize,
    pub seed: u64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            beta: 100.0,
            restarts: 10,
            screening_per_axis: 51,
            screening_budget: 5000,
            screened_starts: 3,
            local_max_evals: 2000,
            seed: 0,
        }
    }
}

impl AcquisitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return input_err(format!("beta must be finite and nonnegative, got {}", self.beta));
        }
        Ok(())
    }

    pub(crate) fn multistart(&self) -> MultiStartOptions {
        MultiStartOptions {
            screening_per_axis: self.screening_per_axis,
            screening_budget: self.screening_budget,
            screened_starts: self.screened_starts,
            random_starts: self.restarts,
            pattern: PatternOptions {
                max_evals: self.local_max_evals,
                ..PatternOptions::default()
            },
        }
    }
}

fn check_in(domain: &BoxDomain, x: &[f64], what: &str) -> Result<()> {
    if x.len() != domain.dim() {
        return input_err(format!("{what} has dimension {}, expected {}", x.len(), domain.dim()));
    }
    if !domain.contains(x, 1e-9) {
        return input_err(format!("{what} = {x:?} lies outside its domain"));
    }
    Ok(())
}

/// `μ(z, θ) + sqrt(beta)·σ(z, θ)`.
pub fn ucb(model: &SurrogateModel, z: &[f64], theta: &[f64], beta: f64) -> Result<f64> {
    if !(beta >= 0.0) {
        return input_err(format!("beta must be nonnegative, got {beta}"));
    }
    check_in(model.z_domain(), z, "z")?;
    check_in(model.theta_domain(), theta, "theta")?;
    let (mean, var) = model.predict(z, theta)?;
    Ok(ucb_value(mean, var, beta))
}

fn ucb_value(mean: f64, var: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        mean
    } else {
        mean + beta.sqrt() * var.sqrt()
    }
}

/// Maximizes `f(z)` over the z domain; `starts` are extra local-search seeds in z units.
fn maximize_over_z<F>(
    model: &SurrogateModel,
    mut f: F,
    starts: &[Vec<f64>],
    cfg: &AcquisitionConfig,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let zd = model.z_domain();
    let extra: Vec<Vec<f64>> = starts.iter().map(|s| zd.to_unit(s)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (u, value) = maximize_unit_box(|u| f(&zd.from_unit(u)), zd.dim(), &extra, &cfg.multistart(), &mut rng);
    (zd.clamp(&zd.from_unit(&u)), value)
}

/// UCB maximizer over z at fixed `theta`, seeded additionally from `starts`
/// (for instance the incumbent).
pub(crate) fn optimize_acquisition_from(
    model: &SurrogateModel,
    theta: &[f64],
    cfg: &AcquisitionConfig,
    starts: &[Vec<f64>],
) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_in(model.theta_domain(), theta, "theta")?;
    let beta = cfg.beta;
    let (z, _) = maximize_over_z(
        model,
        |z| match model.predict(z, theta) {
            Ok((m, v)) => ucb_value(m, v, beta),
            Err(_) => f64::NEG_INFINITY,
        },
        starts,
        cfg,
    );
    Ok(z)
}

/// Candidate `argmax_z ucb(z, theta)`.
pub fn optimize_acquisition(model: &SurrogateModel, theta: &[f64], cfg: &AcquisitionConfig) -> Result<Vec<f64>> {
    optimize_acquisition_from(model, theta, cfg, &[])
}

/// `argmax_z μ(z, theta)` and the maximal mean.
pub fn maximize_posterior_mean(
    model: &SurrogateModel,
    theta: &[f64],
    cfg: &AcquisitionConfig,
    starts: &[Vec<f64>],
) -> Result<(Vec<f64>, f64)> {
    check_in(model.theta_domain(), theta, "theta")?;
    Ok(maximize_over_z(
        model,
        |z| model.predict_mean(z, theta).unwrap_or(f64::NEG_INFINITY),
        starts,
        cfg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contextual_bo::SurrogateConfig;

    fn empty() -> SurrogateModel {
        SurrogateModel::new(BoxDomain::unit(2), BoxDomain::unit(1), SurrogateConfig::default()).unwrap()
    }

    #[test]
    fn empty_model_returns_center() {
        let z = optimize_acquisition(&empty(), &[0.3], &AcquisitionConfig::default()).unwrap();
        assert_eq!(z, vec![0.5, 0.5]);
    }

    #[test]
    fn ucb_rejects_out_of_domain() {
        let m = empty();
        assert!(ucb(&m, &[0.5, 1.5], &[0.3], 1.0).is_err());
        assert!(ucb(&m, &[0.5, 0.5], &[-0.1], 1.0).is_err());
        assert!(ucb(&m, &[0.5, 0.5], &[0.3], -1.0).is_err());
    }

    #[test]
    fn beta_zero_is_the_mean() {
        let mut m = empty();
        m.observe(&[0.2, 0.7], &[0.3], 1.5).unwrap();
        m.observe(&[0.6, 0.1], &[0.4], -0.5).unwrap();
        let (mean, _) = m.predict(&[0.4, 0.4], &[0.3]).unwrap();
        assert_eq!(ucb(&m, &[0.4, 0.4], &[0.3], 0.0).unwrap(), mean);
    }
}
