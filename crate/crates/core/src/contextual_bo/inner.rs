use super::acquisition::{maximize_posterior_mean, optimize_acquisition_from, AcquisitionConfig};
use super::log::IterationRecord;
use super::surrogate::SurrogateModel;
use crate::error::{input_err, Result};

/// Black-box objective `J(z, θ)`; repeated calls may return different noisy values.
pub trait ObjectiveEvaluator {
    fn evaluate(&mut self, z: &[f64], theta: &[f64]) -> Result<f64>;
}

impl<F> ObjectiveEvaluator for F
where
    F: FnMut(&[f64], &[f64]) -> Result<f64>,
{
    fn evaluate(&mut self, z: &[f64], theta: &[f64]) -> Result<f64> {
        self(z, theta)
    }
}

#[derive(Debug, Clone)]
pub struct InnerBoResult {
    /// Maximizer of the final posterior mean at the context.
    pub z_star: Vec<f64>,
    pub mean_at_z_star: f64,
    pub records: Vec<IterationRecord>,
}

pub(crate) fn mix_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_add(1).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// `k_max` rounds of UCB maximization, evaluation and surrogate update at
/// fixed `theta`. On an evaluator failure the error is returned and
/// `surrogate` keeps every observation made so far.
pub fn inner_bo(
    theta: &[f64],
    surrogate: &mut SurrogateModel,
    evaluator: &mut dyn ObjectiveEvaluator,
    k_max: usize,
    cfg: &AcquisitionConfig,
) -> Result<InnerBoResult> {
    if k_max == 0 {
        return input_err("k_max must be at least 1");
    }
    cfg.validate()?;
    let mut records = Vec::with_capacity(k_max);
    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    for k in 1..=k_max {
        let step_cfg = AcquisitionConfig {
            seed: mix_seed(cfg.seed, k as u64),
            ..cfg.clone()
        };
        let starts: Vec<Vec<f64>> = incumbent.iter().map(|(z, _)| z.clone()).collect();
        let z = optimize_acquisition_from(surrogate, theta, &step_cfg, &starts)?;
        let y = evaluator.evaluate(&z, theta)?;
        surrogate.observe(&z, theta, y)?;
        if incumbent.as_ref().is_none_or(|(_, best)| y > *best) {
            incumbent = Some((z.clone(), y));
        }
        records.push(IterationRecord {
            outer: 0,
            k,
            z,
            theta: theta.to_vec(),
            y,
            incumbent: incumbent.as_ref().map_or(y, |(_, best)| *best),
        });
    }
    let starts: Vec<Vec<f64>> = incumbent.into_iter().map(|(z, _)| z).collect();
    let final_cfg = AcquisitionConfig {
        seed: mix_seed(cfg.seed, 0),
        ..cfg.clone()
    };
    let (z_star, mean_at_z_star) = maximize_posterior_mean(surrogate, theta, &final_cfg, &starts)?;
    Ok(InnerBoResult {
        z_star,
        mean_at_z_star,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contextual_bo::SurrogateConfig;
    use crate::domain::BoxDomain;
    use crate::Error;

    fn surrogate() -> SurrogateModel {
        SurrogateModel::new(BoxDomain::unit(1), BoxDomain::unit(1), SurrogateConfig::default()).unwrap()
    }

    #[test]
    fn single_iteration_adds_one_point() {
        let mut s = surrogate();
        let mut calls = 0;
        let mut eval = |z: &[f64], t: &[f64]| {
            calls += 1;
            Ok(-(z[0] - t[0]).powi(2))
        };
        let out = inner_bo(&[0.4], &mut s, &mut eval, 1, &AcquisitionConfig::default()).unwrap();
        assert_eq!(calls, 1);
        assert_eq!(s.len(), 1);
        assert_eq!(out.records.len(), 1);
    }

    #[test]
    fn evaluator_failure_keeps_partial_data() {
        let mut s = surrogate();
        let mut n = 0;
        let mut eval = |z: &[f64], _: &[f64]| {
            n += 1;
            if n == 3 {
                Err(Error::Evaluation("boom".into()))
            } else {
                Ok(z[0])
            }
        };
        let err = inner_bo(&[0.4], &mut s, &mut eval, 5, &AcquisitionConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Evaluation(_)));
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn zero_iterations_rejected() {
        let mut s = surrogate();
        let mut eval = |_: &[f64], _: &[f64]| Ok(0.0);
        assert!(inner_bo(&[0.4], &mut s, &mut eval, 0, &AcquisitionConfig::default()).is_err());
    }
}
