//! Single-output Gaussian process regression.

pub mod kernel;
pub(crate) mod linalg;
pub mod regressor;
pub mod train;

pub use kernel::{KernelFamily, KernelSpec, ProductFactor, StationaryKind};
pub use regressor::{Dataset, GPRegressor, GpState, OutputScaling};
pub use train::{gp_fit, NoiseMode, TrainConfig};

/// `κ(x, x2)` for the given kernel.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], x2: &[f64]) -> crate::Result<f64> {
    spec.eval(x, x2)
}

/// Posterior `(mean, variance)` at `x_star`.
pub fn gp_predict(model: &GPRegressor, x_star: &[f64]) -> crate::Result<(f64, f64)> {
    model.predict(x_star)
}

pub fn log_marginal_likelihood(model: &GPRegressor) -> f64 {
    model.log_marginal_likelihood()
}
