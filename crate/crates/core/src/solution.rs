//! The solution map `θ ↦ z*` and the outer adaptive-sampling loop.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contextual_bo::{inner_bo, AcquisitionConfig, IterationRecord, ObjectiveEvaluator, SurrogateConfig, SurrogateModel};
use crate::domain::BoxDomain;
use crate::error::{input_err, Error, Result};
use crate::gp::linalg::floored_log_det;
use crate::gp::{gp_fit, Dataset, GPRegressor, GpState, KernelSpec, TrainConfig};
use crate::mogp::{mogp_fit, MOGPRegressor, MogpState, MultiOutputDataset};
use crate::optim::{maximize_unit_box, MultiStartOptions};

pub(crate) use crate::contextual_bo::inner::mix_seed;

/// How the solution GP is fit and how the next context is searched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolutionConfig {
    /// Initial Matérn-3/2 lengthscale in unit-box coordinates.
    pub initial_lengthscale: f64,
    pub train: TrainConfig,
    /// Eigenvalue floor for the log-determinant criterion.
    pub log_det_floor: f64,
    pub sampler_restarts: usize,
    pub screening_per_axis: usize,
    pub screening_budget: usize,
}

impl Default for SolutionConfig {
    fn default() -> Self {
        Self {
            initial_lengthscale: 0.3,
            train: TrainConfig::default(),
            log_det_floor: 1e-12,
            sampler_restarts: 10,
            screening_per_axis: 51,
            screening_budget: 5000,
        }
    }
}

impl SolutionConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !(self.initial_lengthscale > 0.0 && self.log_det_floor > 0.0) {
            return input_err("initial_lengthscale and log_det_floor must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum SolutionGp {
    Single(GPRegressor),
    Multi(MOGPRegressor),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolutionGpState {
    Single(GpState),
    Multi(MogpState),
}

/// GP over contexts predicting the best controller parameters; a single-output
/// GP when `z` is scalar, an ICM multi-output GP otherwise.
#[derive(Debug, Clone)]
pub struct SolutionModel {
    theta_domain: BoxDomain,
    z_domain: BoxDomain,
    config: SolutionConfig,
    thetas: Vec<Vec<f64>>,
    zs: Vec<Vec<f64>>,
    gp: Option<SolutionGp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionState {
    pub theta_domain: BoxDomain,
    pub z_domain: BoxDomain,
    pub config: SolutionConfig,
    pub thetas: Vec<Vec<f64>>,
    pub zs: Vec<Vec<f64>>,
    pub gp: Option<SolutionGpState>,
}

impl SolutionModel {
    pub fn new(theta_domain: BoxDomain, z_domain: BoxDomain, config: SolutionConfig) -> Result<Self> {
        theta_domain.validate()?;
        z_domain.validate()?;
        config.validate()?;
        Ok(Self {
            theta_domain,
            z_domain,
            config,
            thetas: Vec::new(),
            zs: Vec::new(),
            gp: None,
        })
    }

    pub fn theta_domain(&self) -> &BoxDomain {
        &self.theta_domain
    }

    pub fn z_domain(&self) -> &BoxDomain {
        &self.z_domain
    }

    pub fn config(&self) -> &SolutionConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.thetas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thetas.is_empty()
    }

    pub fn contexts(&self) -> &[Vec<f64>] {
        &self.thetas
    }

    pub fn solutions(&self) -> &[Vec<f64>] {
        &self.zs
    }

    pub fn is_fitted(&self) -> bool {
        self.gp.is_some()
    }

    /// Records `(θ, z*)` (with `z*` clamped into the z domain) and refits.
    pub fn add_pair(&mut self, theta: &[f64], z_star: &[f64]) -> Result<()> {
        if theta.len() != self.theta_domain.dim() || z_star.len() != self.z_domain.dim() {
            return input_err("context or solution has the wrong dimension");
        }
        if !self.theta_domain.contains(theta, 1e-9) {
            return input_err(format!("context {theta:?} lies outside the context domain"));
        }
        let mut next = self.clone();
        next.thetas.push(self.theta_domain.clamp(theta));
        next.zs.push(self.z_domain.clamp(z_star));
        next.refit()?;
        *self = next;
        Ok(())
    }

    fn refit(&mut self) -> Result<()> {
        let dim = self.theta_domain.dim();
        let spec = KernelSpec::matern32(vec![self.config.initial_lengthscale; dim], 1.0)?;
        let mut train = self.config.train.clone();
        train.input_domain = Some(self.theta_domain.clone());
        let gp = if self.z_domain.dim() == 1 {
            let data = Dataset::new(self.thetas.clone(), self.zs.iter().map(|z| z[0]).collect())?;
            SolutionGp::Single(gp_fit(&data, &spec, &train)?)
        } else {
            let data = MultiOutputDataset::new(self.thetas.clone(), self.zs.clone())?;
            SolutionGp::Multi(mogp_fit(&data, &spec, self.z_domain.dim(), &train)?)
        };
        self.gp = Some(gp);
        Ok(())
    }

    fn fitted(&self) -> Result<&SolutionGp> {
        self.gp
            .as_ref()
            .ok_or_else(|| Error::State("solution model has no data yet".into()))
    }

    /// Posterior mean of `z*` at `theta`, unclamped.
    pub fn posterior_mean(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match self.fitted()? {
            SolutionGp::Single(gp) => Ok(vec![gp.predict_mean(theta)?]),
            SolutionGp::Multi(gp) => Ok(gp.predict_mean(theta)?.iter().copied().collect()),
        }
    }

    /// Noise-free predictive covariance of `z*` at `theta`.
    pub fn predictive_covariance(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        match self.fitted()? {
            SolutionGp::Single(gp) => Ok(DMatrix::from_element(1, 1, gp.predict(theta)?.1)),
            SolutionGp::Multi(gp) => Ok(gp.predict(theta)?.1),
        }
    }

    /// `log det Σ(θ)` with eigenvalues floored.
    pub fn log_det_criterion(&self, theta: &[f64]) -> Result<f64> {
        Ok(floored_log_det(&self.predictive_covariance(theta)?, self.config.log_det_floor))
    }

    pub fn to_state(&self) -> SolutionState {
        SolutionState {
            theta_domain: self.theta_domain.clone(),
            z_domain: self.z_domain.clone(),
            config: self.config.clone(),
            thetas: self.thetas.clone(),
            zs: self.zs.clone(),
            gp: self.gp.as_ref().map(|gp| match gp {
                SolutionGp::Single(g) => SolutionGpState::Single(g.to_state()),
                SolutionGp::Multi(g) => SolutionGpState::Multi(g.to_state()),
            }),
        }
    }

    pub fn from_state(state: SolutionState) -> Result<Self> {
        let gp = match state.gp {
            None => None,
            Some(SolutionGpState::Single(s)) => Some(SolutionGp::Single(GPRegressor::from_state(s)?)),
            Some(SolutionGpState::Multi(s)) => Some(SolutionGp::Multi(MOGPRegressor::from_state(s)?)),
        };
        let model = Self {
            theta_domain: state.theta_domain,
            z_domain: state.z_domain,
            config: state.config,
            thetas: state.thetas,
            zs: state.zs,
            gp,
        };
        if model.thetas.len() != model.zs.len() || model.gp.is_some() == model.thetas.is_empty() {
            return Err(Error::State("solution model state is inconsistent".into()));
        }
        Ok(model)
    }
}

/// Context maximizing the log-determinant of the predictive covariance; the
/// domain center when the model is empty.
pub fn next_context(model: &SolutionModel, seed: u64) -> Result<Vec<f64>> {
    let td = &model.theta_domain;
    if !model.is_fitted() {
        return Ok(td.center());
    }
    let opts = MultiStartOptions {
        screening_per_axis: model.config.screening_per_axis,
        screening_budget: model.config.screening_budget,
        random_starts: model.config.sampler_restarts,
        ..MultiStartOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (u, _) = maximize_unit_box(
        |u| model.log_det_criterion(&td.from_unit(u)).unwrap_or(f64::NEG_INFINITY),
        td.dim(),
        &[],
        &opts,
        &mut rng,
    );
    Ok(td.clamp(&td.from_unit(&u)))
}

/// Controller parameters for `theta`: the posterior mean clamped into the z
/// domain. Out-of-domain contexts are clamped with a warning.
pub fn adapt(model: &SolutionModel, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != model.theta_domain.dim() {
        return input_err(format!(
            "context has dimension {}, expected {}",
            theta.len(),
            model.theta_domain.dim()
        ));
    }
    let theta = if model.theta_domain.contains(theta, 0.0) {
        theta.to_vec()
    } else {
        log::warn!("context {theta:?} outside the context domain; clamping");
        model.theta_domain.clamp(theta)
    };
    let mean = model.posterior_mean(&theta)?;
    Ok(model.z_domain.clamp(&mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterLoopConfig {
    pub j_max: usize,
    pub k_max: usize,
    pub acquisition: AcquisitionConfig,
    pub surrogate: SurrogateConfig,
    pub solution: SolutionConfig,
    pub seed: u64,
}

impl Default for OuterLoopConfig {
    fn default() -> Self {
        Self {
            j_max: 30,
            k_max: 30,
            acquisition: AcquisitionConfig::default(),
            surrogate: SurrogateConfig::default(),
            solution: SolutionConfig::default(),
            seed: 0,
        }
    }
}

impl OuterLoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.j_max == 0 || self.k_max == 0 {
            return Err(Error::Config("j_max and k_max must be at least 1".into()));
        }
        self.acquisition.validate()?;
        self.surrogate.validate()?;
        self.solution.validate()
    }
}

/// State handed to the checkpoint hook after each completed outer iteration.
pub struct Checkpoint<'a> {
    pub iteration: usize,
    pub solution: &'a SolutionModel,
    pub surrogate: &'a SurrogateModel,
    pub records: &'a [IterationRecord],
}

pub struct OuterLoopRun {
    pub solution: SolutionModel,
    pub surrogate: SurrogateModel,
    pub records: Vec<IterationRecord>,
    /// Set when an iteration failed; the models are from the last completed one.
    pub failure: Option<Error>,
}

/// Adaptive sampling over contexts with one inner BO run per context. The
/// surrogate carries over between contexts and the solution model is refit
/// after every iteration.
pub fn outer_loop(
    evaluator: &mut dyn ObjectiveEvaluator,
    z_domain: &BoxDomain,
    theta_domain: &BoxDomain,
    cfg: &OuterLoopConfig,
    checkpoint: &mut dyn FnMut(&Checkpoint<'_>) -> Result<()>,
) -> Result<OuterLoopRun> {
    cfg.validate()?;
    let surrogate_cfg = SurrogateConfig {
        train: TrainConfig {
            seed: mix_seed(cfg.seed, 1),
            ..cfg.surrogate.train.clone()
        },
        ..cfg.surrogate.clone()
    };
    let solution_cfg = SolutionConfig {
        train: TrainConfig {
            seed: mix_seed(cfg.seed, 2),
            ..cfg.solution.train.clone()
        },
        ..cfg.solution.clone()
    };
    let mut run = OuterLoopRun {
        solution: SolutionModel::new(theta_domain.clone(), z_domain.clone(), solution_cfg)?,
        surrogate: SurrogateModel::new(z_domain.clone(), theta_domain.clone(), surrogate_cfg)?,
        records: Vec::new(),
        failure: None,
    };
    for j in 1..=cfg.j_max {
        if let Err(e) = outer_iteration(evaluator, cfg, j, &mut run) {
            log::error!("outer iteration {j} failed: {e}");
            run.failure = Some(e);
            break;
        }
        let cp = Checkpoint {
            iteration: j,
            solution: &run.solution,
            surrogate: &run.surrogate,
            records: &run.records,
        };
        if let Err(e) = checkpoint(&cp) {
            run.failure = Some(e);
            break;
        }
    }
    Ok(run)
}

fn outer_iteration(
    evaluator: &mut dyn ObjectiveEvaluator,
    cfg: &OuterLoopConfig,
    j: usize,
    run: &mut OuterLoopRun,
) -> Result<()> {
    let theta = next_context(&run.solution, mix_seed(cfg.seed, 3 + 2 * j as u64))?;
    let acq = AcquisitionConfig {
        seed: mix_seed(cfg.seed, 4 + 2 * j as u64),
        ..cfg.acquisition.clone()
    };
    let mut surrogate = run.surrogate.clone();
    let inner = inner_bo(&theta, &mut surrogate, evaluator, cfg.k_max, &acq)?;
    run.solution.add_pair(&theta, &inner.z_star)?;
    run.surrogate = surrogate;
    run.records.extend(inner.records.into_iter().map(|r| IterationRecord { outer: j, ..r }));
    log::info!(
        "outer {j}/{}: theta={theta:?} z*={:?} mean={:.6}",
        cfg.j_max,
        inner.z_star,
        inner.mean_at_z_star
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_1d() -> SolutionModel {
        SolutionModel::new(BoxDomain::unit(1), BoxDomain::unit(1), SolutionConfig::default()).unwrap()
    }

    #[test]
    fn empty_model_samples_center_and_refuses_adapt() {
        let m = model_1d();
        assert_eq!(next_context(&m, 0).unwrap(), vec![0.5]);
        assert!(matches!(adapt(&m, &[0.5]), Err(Error::State(_))));
    }

    #[test]
    fn single_pair_far_query_returns_stored_mean() {
        let mut m = model_1d();
        m.add_pair(&[0.0], &[0.7]).unwrap();
        let z = adapt(&m, &[1.0]).unwrap();
        assert!((z[0] - 0.7).abs() < 1e-6, "{z:?}");
    }

    #[test]
    fn out_of_domain_context_is_clamped() {
        let mut m = model_1d();
        m.add_pair(&[0.2], &[0.3]).unwrap();
        m.add_pair(&[0.8], &[0.9]).unwrap();
        assert_eq!(adapt(&m, &[7.0]).unwrap(), adapt(&m, &[1.0]).unwrap());
    }

    #[test]
    fn stored_solutions_are_clamped() {
        let mut m = model_1d();
        m.add_pair(&[0.2], &[1.3]).unwrap();
        assert_eq!(m.solutions()[0], vec![1.0]);
        assert!(m.add_pair(&[1.2], &[0.3]).is_err());
        assert_eq!(m.len(), 1);
    }

    #[test]
    fn zero_iterations_is_a_config_error() {
        let cfg = OuterLoopConfig {
            j_max: 0,
            ..OuterLoopConfig::default()
        };
        let mut eval = |_: &[f64], _: &[f64]| Ok(0.0);
        let r = outer_loop(&mut eval, &BoxDomain::unit(1), &BoxDomain::unit(1), &cfg, &mut |_| Ok(()));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
