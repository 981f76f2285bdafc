use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::contextual_bo::ObjectiveEvaluator;
use crate::domain::BoxDomain;
use crate::error::{input_err, Result};
use crate::solution::mix_seed;

const LINEAR_MAP: [[f64; 2]; 2] = [[0.6, 0.3], [-0.3, 0.6]];

/// Analytic objectives `J(z, θ) = −‖z − γ(θ)‖²` with a known solution map `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchmarkId {
    /// `γ(θ) = θ` on `[0, 1]`.
    #[serde(rename = "quadratic_1d")]
    Quadratic1d,
    /// `γ(θ) = Aθ` on `[−1, 1]²` with a fixed rotation-scaling `A`.
    #[serde(rename = "linear_2d")]
    Linear2d,
    /// `γ(θ) = 2|θ − 0.5|` on `[0, 1]`, kinked at the midpoint.
    #[serde(rename = "kink_1d")]
    Kink1d,
}

impl BenchmarkId {
    pub const ALL: [BenchmarkId; 3] = [BenchmarkId::Quadratic1d, BenchmarkId::Linear2d, BenchmarkId::Kink1d];

    pub fn z_domain(self) -> BoxDomain {
        match self {
            BenchmarkId::Quadratic1d | BenchmarkId::Kink1d => BoxDomain::unit(1),
            BenchmarkId::Linear2d => BoxDomain::cube(2, -1.0, 1.0).expect("valid bounds"),
        }
    }

    pub fn theta_domain(self) -> BoxDomain {
        self.z_domain()
    }

    /// The true solution map.
    pub fn optimum(self, theta: &[f64]) -> Vec<f64> {
        match self {
            BenchmarkId::Quadratic1d => vec![theta[0]],
            BenchmarkId::Kink1d => vec![2.0 * (theta[0] - 0.5).abs()],
            BenchmarkId::Linear2d => LINEAR_MAP
                .iter()
                .map(|row| row[0] * theta[0] + row[1] * theta[1])
                .collect(),
        }
    }

    pub fn objective(self, z: &[f64], theta: &[f64]) -> Result<f64> {
        let d = self.z_domain().dim();
        if z.len() != d || theta.len() != d {
            return input_err(format!("benchmark {self:?} expects {d}-dimensional z and theta"));
        }
        Ok(-self
            .optimum(theta)
            .iter()
            .zip(z)
            .map(|(g, zi)| (zi - g).powi(2))
            .sum::<f64>())
    }
}

/// Benchmark objective with optional Gaussian observation noise drawn from a
/// per-call seed stream.
#[derive(Debug, Clone)]
pub struct BenchmarkEvaluator {
    pub id: BenchmarkId,
    noise_std: f64,
    seed: u64,
    calls: u64,
}

impl BenchmarkEvaluator {
    pub fn new(id: BenchmarkId, noise_std: f64, seed: u64) -> Result<Self> {
        if !(noise_std >= 0.0 && noise_std.is_finite()) {
            return input_err(format!("noise_std must be finite and nonnegative, got {noise_std}"));
        }
        Ok(Self {
            id,
            noise_std,
            seed,
            calls: 0,
        })
    }
}

impl ObjectiveEvaluator for BenchmarkEvaluator {
    fn evaluate(&mut self, z: &[f64], theta: &[f64]) -> Result<f64> {
        self.calls += 1;
        let clean = self.id.objective(z, theta)?;
        if self.noise_std == 0.0 {
            return Ok(clean);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, self.calls));
        let noise = Normal::new(0.0, self.noise_std).expect("validated std");
        Ok(clean + noise.sample(&mut rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn optimum_maximizes_objective() {
        for id in BenchmarkId::ALL {
            let theta = id.theta_domain().center();
            let z = id.optimum(&theta);
            assert_eq!(id.objective(&z, &theta).unwrap(), 0.0);
        }
        assert_eq!(BenchmarkId::Kink1d.optimum(&[0.0]), vec![1.0]);
        assert_eq!(BenchmarkId::Linear2d.optimum(&[1.0, 0.0]), vec![0.6, -0.3]);
    }

    #[test]
    fn noise_is_seeded() {
        let mut a = BenchmarkEvaluator::new(BenchmarkId::Quadratic1d, 0.01, 3).unwrap();
        let mut b = BenchmarkEvaluator::new(BenchmarkId::Quadratic1d, 0.01, 3).unwrap();
        let ya = a.evaluate(&[0.2], &[0.5]).unwrap();
        assert_eq!(ya, b.evaluate(&[0.2], &[0.5]).unwrap());
        assert_ne!(ya, a.evaluate(&[0.2], &[0.5]).unwrap());
    }
}
