use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{input_err, Result};
use crate::gp::{gp_fit, Dataset, GPRegressor, GpState, KernelSpec, OutputScaling, StationaryKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    /// FIFO capacity of the dataset.
    pub max_data: usize,
    /// Initial lengthscale in unit-box coordinates.
    pub initial_lengthscale: f64,
    /// Settings for the first (cold) hyperparameter fit.
    pub train: TrainConfig,
    /// Random restarts added to the warm start on later refits.
    pub warm_restarts: usize,
    pub warm_max_iters: usize,
    /// Hyperparameters are refit on every update up to this count...
    pub refit_all_until: usize,
    /// ...and on every `refit_period`-th update afterwards.
    pub refit_period: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            max_data: 300,
            initial_lengthscale: 0.3,
            train: TrainConfig::default(),
            warm_restarts: 0,
            warm_max_iters: 30,
            refit_all_until: 10,
            refit_period: 5,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.max_data == 0 {
            return input_err("max_data must be at least 1");
        }
        if self.refit_period == 0 {
            return input_err("refit_period must be at least 1");
        }
        if !(self.initial_lengthscale > 0.0 && self.initial_lengthscale.is_finite()) {
            return input_err("initial_lengthscale must be positive");
        }
        Ok(())
    }
}

/// GP over concatenated `(z, θ)` with a Matérn-3/2 × Matérn-3/2 product kernel.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    cfg: SurrogateConfig,
    z_domain: BoxDomain,
    theta_domain: BoxDomain,
    gp: GPRegressor,
    updates: usize,
    fitted: bool,
}

/// Serializable form of a [`SurrogateModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateState {
    pub config: SurrogateConfig,
    pub z_domain: BoxDomain,
    pub theta_domain: BoxDomain,
    pub gp: GpState,
    pub updates: usize,
    pub fitted: bool,
}

/// Appends `(x, y)`, first dropping the oldest observation when the dataset
/// already holds `max_data` points.
pub fn manage_dataset(data: &mut Dataset, max_data: usize, x: Vec<f64>, y: f64) -> Result<()> {
    if max_data == 0 {
        return input_err("max_data must be at least 1");
    }
    if data.len() >= max_data {
        let skip = data.len() + 1 - max_data;
        let mut kept = Dataset::empty(data.input_dim());
        for (xi, yi) in data.inputs().iter().zip(data.outputs()).skip(skip) {
            kept.push(xi.clone(), *yi)?;
        }
        *data = kept;
    }
    data.push(x, y)
}

fn joint_domain(z: &BoxDomain, theta: &BoxDomain) -> Result<BoxDomain> {
    BoxDomain::new(
        z.lower().iter().chain(theta.lower()).copied().collect(),
        z.upper().iter().chain(theta.upper()).copied().collect(),
    )
}

impl SurrogateModel {
    pub fn new(z_domain: BoxDomain, theta_domain: BoxDomain, cfg: SurrogateConfig) -> Result<Self> {
        cfg.validate()?;
        let (dz, dt) = (z_domain.dim(), theta_domain.dim());
        let kernel = KernelSpec::product_pair(
            StationaryKind::Matern32,
            dz,
            StationaryKind::Matern32,
            dt,
            vec![cfg.initial_lengthscale; dz + dt],
            1.0,
        )?;
        let domain = joint_domain(&z_domain, &theta_domain)?;
        let gp = GPRegressor::from_parts(
            Dataset::empty(dz + dt),
            kernel,
            cfg.train.initial_noise_variance,
            Some(domain),
            OutputScaling::identity(),
        )?;
        Ok(Self {
            cfg,
            z_domain,
            theta_domain,
            gp,
            updates: 0,
            fitted: false,
        })
    }

    pub fn gp(&self) -> &GPRegressor {
        &self.gp
    }

    pub fn z_domain(&self) -> &BoxDomain {
        &self.z_domain
    }

    pub fn theta_domain(&self) -> &BoxDomain {
        &self.theta_domain
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.cfg
    }

    pub fn max_data(&self) -> usize {
        self.cfg.max_data
    }

    pub fn len(&self) -> usize {
        self.gp.data().len()
    }

    pub fn is_empty(&self) -> bool {
        self.gp.data().is_empty()
    }

    /// Observations ever added, including evicted ones.
    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn joint_input(&self, z: &[f64], theta: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.z_domain.dim() || theta.len() != self.theta_domain.dim() {
            return input_err(format!(
                "expected z of dim {} and theta of dim {}, got {} and {}",
                self.z_domain.dim(),
                self.theta_domain.dim(),
                z.len(),
                theta.len()
            ));
        }
        Ok(z.iter().chain(theta).copied().collect())
    }

    pub fn predict(&self, z: &[f64], theta: &[f64]) -> Result<(f64, f64)> {
        self.gp.predict(&self.joint_input(z, theta)?)
    }

    pub fn predict_mean(&self, z: &[f64], theta: &[f64]) -> Result<f64> {
        self.gp.predict_mean(&self.joint_input(z, theta)?)
    }

    fn refit_due(&self) -> bool {
        !self.fitted || self.updates <= self.cfg.refit_all_until || self.updates % self.cfg.refit_period == 0
    }

    /// Adds one observation (FIFO-evicting if full) and updates the
    /// posterior, retraining hyperparameters on the configured cadence.
    pub fn observe(&mut self, z: &[f64], theta: &[f64], y: f64) -> Result<()> {
        let x = self.joint_input(z, theta)?;
        let mut data = self.gp.data().clone();
        manage_dataset(&mut data, self.cfg.max_data, x, y)?;
        self.updates += 1;
        self.gp = if self.refit_due() {
            self.fit(&data)?
        } else {
            self.gp.condition_on(data, self.cfg.train.standardize_outputs)?
        };
        Ok(())
    }

    fn fit(&mut self, data: &Dataset) -> Result<GPRegressor> {
        let mut train = self.cfg.train.clone();
        train.input_domain = self.gp.input_domain().cloned();
        train.seed = self.cfg.train.seed.wrapping_add(self.updates as u64);
        if self.fitted {
            train.restarts = self.cfg.warm_restarts;
            train.max_iters = self.cfg.warm_max_iters;
            train.initial_noise_variance = self
                .gp
                .noise_variance()
                .clamp(train.noise_variance_bounds.0, train.noise_variance_bounds.1);
        }
        let gp = gp_fit(data, self.gp.kernel(), &train)?;
        self.fitted = true;
        Ok(gp)
    }

    pub fn to_state(&self) -> SurrogateState {
        SurrogateState {
            config: self.cfg.clone(),
            z_domain: self.z_domain.clone(),
            theta_domain: self.theta_domain.clone(),
            gp: self.gp.to_state(),
            updates: self.updates,
            fitted: self.fitted,
        }
    }

    pub fn from_state(state: SurrogateState) -> Result<Self> {
        state.config.validate()?;
        let gp = GPRegressor::from_state(state.gp)?;
        if gp.kernel().input_dim() != state.z_domain.dim() + state.theta_domain.dim() {
            return input_err("surrogate kernel does not match the z and theta domains");
        }
        Ok(Self {
            cfg: state.config,
            z_domain: state.z_domain,
            theta_domain: state.theta_domain,
            gp,
            updates: state.updates,
            fitted: state.fitted,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fifo_keeps_the_latest_points() {
        let mut data = Dataset::empty(1);
        for i in 0..25 {
            manage_dataset(&mut data, 10, vec![i as f64], i as f64).unwrap();
            assert!(data.len() <= 10);
        }
        let expected: Vec<f64> = (15..25).map(|i| i as f64).collect();
        assert_eq!(data.outputs(), expected.as_slice());
    }

    #[test]
    fn append_below_capacity() {
        let mut data = Dataset::new((0..5).map(|i| vec![i as f64]).collect(), vec![0.0; 5]).unwrap();
        manage_dataset(&mut data, 10, vec![9.0], 1.0).unwrap();
        assert_eq!(data.len(), 6);
    }

    #[test]
    fn full_dataset_drops_oldest() {
        let mut data = Dataset::new((0..10).map(|i| vec![i as f64]).collect(), vec![0.0; 10]).unwrap();
        manage_dataset(&mut data, 10, vec![10.0], 1.0).unwrap();
        assert_eq!(data.len(), 10);
        assert_eq!(data.inputs()[0], vec![1.0]);
    }

    #[test]
    fn surrogate_respects_capacity() {
        let cfg = SurrogateConfig {
            max_data: 4,
            ..SurrogateConfig::default()
        };
        let mut s = SurrogateModel::new(BoxDomain::unit(1), BoxDomain::unit(1), cfg).unwrap();
        for i in 0..7 {
            let z = i as f64 / 7.0;
            s.observe(&[z], &[0.5], -z * z).unwrap();
        }
        assert_eq!(s.len(), 4);
        assert_eq!(s.updates(), 7);
        assert!(s.observe(&[0.1, 0.2], &[0.5], 0.0).is_err());
    }
}
