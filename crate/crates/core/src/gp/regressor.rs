use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use super::linalg::{cholesky_log_det, cholesky_solve, cholesky_with_jitter, solve_lower};
use crate::domain::BoxDomain;
use crate::error::{input_err, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Training inputs `X` (one row per observation) and scalar outputs `Y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<f64>) -> Result<Self> {
        let dim = match inputs.first() {
            Some(row) => row.len(),
            None => return input_err("use Dataset::empty for a dataset without observations"),
        };
        let mut data = Self::empty(dim);
        if inputs.len() != outputs.len() {
            return input_err(format!(
                "{} input rows but {} outputs",
                inputs.len(),
                outputs.len()
            ));
        }
        for (x, y) in inputs.into_iter().zip(outputs) {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if x.len() != self.dim {
            return input_err(format!("expected {}-dimensional input, got {}", self.dim, x.len()));
        }
        if !x.iter().all(|v| v.is_finite()) || !y.is_finite() {
            return input_err("dataset entries must be finite");
        }
        self.inputs.push(x);
        self.outputs.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.outputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }
}

/// Affine output transform `y = mean + scale · y_internal`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputScaling {
    pub mean: f64,
    pub scale: f64,
}

impl OutputScaling {
    pub fn identity() -> Self {
        Self { mean: 0.0, scale: 1.0 }
    }

    /// Zero mean, unit variance over `ys`; a constant sample keeps unit scale.
    pub fn standardizing(ys: &[f64]) -> Self {
        if ys.is_empty() {
            return Self::identity();
        }
        let n = ys.len() as f64;
        let mean = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        let scale = if sd > 1e-12 * (1.0 + mean.abs()) { sd } else { 1.0 };
        Self { mean, scale }
    }

    pub fn to_internal(&self, y: f64) -> f64 {
        (y - self.mean) / self.scale
    }
}

/// Zero-mean GP posterior over a fixed dataset with fixed hyperparameters.
///
/// Inputs are optionally mapped onto the unit box of `input_domain` before the
/// kernel sees them, and outputs pass through `output_scaling`. With neither
/// transform the model is exactly the textbook posterior
/// `μ = K_*(K+σ²I)⁻¹Y`, `σ² = K_** − K_*(K+σ²I)⁻¹K_*ᵀ`.
#[derive(Debug, Clone)]
pub struct GPRegressor {
    kernel: KernelSpec,
    noise_variance: f64,
    data: Dataset,
    input_domain: Option<BoxDomain>,
    output_scaling: OutputScaling,
    scaled_inputs: Vec<Vec<f64>>,
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GPRegressor {
    /// Untransformed model.
    pub fn new(data: Dataset, kernel: KernelSpec, noise_variance: f64) -> Result<Self> {
        Self::from_parts(data, kernel, noise_variance, None, OutputScaling::identity())
    }

    pub fn from_parts(
        data: Dataset,
        kernel: KernelSpec,
        noise_variance: f64,
        input_domain: Option<BoxDomain>,
        output_scaling: OutputScaling,
    ) -> Result<Self> {
        kernel.validate()?;
        if data.input_dim() != kernel.input_dim() {
            return input_err(format!(
                "kernel is {}-dimensional but data is {}-dimensional",
                kernel.input_dim(),
                data.input_dim()
            ));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return input_err(format!("noise variance must be nonnegative, got {noise_variance}"));
        }
        if let Some(domain) = &input_domain {
            if domain.dim() != data.input_dim() {
                return input_err("input domain dimension does not match data");
            }
        }
        if !(output_scaling.scale.is_finite() && output_scaling.scale > 0.0) {
            return input_err("output scale must be positive");
        }
        let scaled_inputs: Vec<Vec<f64>> = data
            .inputs()
            .iter()
            .map(|x| scale_input(&input_domain, x))
            .collect();
        let y = DVector::from_iterator(
            data.len(),
            data.outputs().iter().map(|y| output_scaling.to_internal(*y)),
        );
        let cov = covariance(&kernel, &scaled_inputs, noise_variance);
        let (factor, jitter) = cholesky_with_jitter(&cov, kernel.signal_variance())?;
        let alpha = cholesky_solve(&factor, &y);
        Ok(Self {
            kernel,
            noise_variance,
            data,
            input_domain,
            output_scaling,
            scaled_inputs,
            factor,
            alpha,
            jitter,
        })
    }

    /// Same hyperparameters and input transform, new data; output scaling is
    /// recomputed when `standardize` is set.
    pub fn condition_on(&self, data: Dataset, standardize: bool) -> Result<Self> {
        let scaling = if standardize {
            OutputScaling::standardizing(data.outputs())
        } else {
            self.output_scaling
        };
        Self::from_parts(
            data,
            self.kernel.clone(),
            self.noise_variance,
            self.input_domain.clone(),
            scaling,
        )
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Noise variance in internal (standardized) output units.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Noise variance expressed in the units of the training outputs.
    pub fn noise_variance_in_output_units(&self) -> f64 {
        self.noise_variance * self.output_scaling.scale.powi(2)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn input_domain(&self) -> Option<&BoxDomain> {
        self.input_domain.as_ref()
    }

    pub fn output_scaling(&self) -> OutputScaling {
        self.output_scaling
    }

    /// Diagonal jitter added on top of the noise variance (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower factor `L` with `L Lᵀ = K + (σ_n² + jitter) I`.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `K + σ_n² I` over the (transformed) training inputs, without jitter.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        covariance(&self.kernel, &self.scaled_inputs, self.noise_variance)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.kernel.input_dim() {
            return input_err(format!(
                "query is {}-dimensional, model expects {}",
                x.len(),
                self.kernel.input_dim()
            ));
        }
        Ok(())
    }

    fn cross_covariance(&self, xs: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.scaled_inputs.len(),
            self.scaled_inputs.iter().map(|xi| self.kernel.k(xs, xi)),
        )
    }

    /// Posterior mean and variance at `x`; variance is clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(x)?;
        let xs = scale_input(&self.input_domain, x);
        let prior = self.kernel.k(&xs, &xs);
        if self.data.is_empty() {
            return Ok((
                self.output_scaling.mean,
                prior * self.output_scaling.scale.powi(2),
            ));
        }
        let kstar = self.cross_covariance(&xs);
        let mean = kstar.dot(&self.alpha);
        let v = solve_lower(&self.factor, &kstar);
        let var = (prior - v.dot(&v)).max(0.0);
        Ok((
            self.output_scaling.mean + self.output_scaling.scale * mean,
            var * self.output_scaling.scale.powi(2),
        ))
    }

    /// Posterior mean only: one kernel row and a dot product.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let xs = scale_input(&self.input_domain, x);
        let mean = if self.data.is_empty() {
            0.0
        } else {
            self.cross_covariance(&xs).dot(&self.alpha)
        };
        Ok(self.output_scaling.mean + self.output_scaling.scale * mean)
    }

    /// `log p(Y)` under the model, in the units of the training outputs:
    /// `−½ỹᵀ(K+σ²I)⁻¹ỹ − ½ log det(K+σ²I) − (N/2) log 2π − N log s`
    /// where `ỹ` are the scaled outputs and `s` the output scale.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.data.len() as f64;
        let y = DVector::from_iterator(
            self.data.len(),
            self.data
                .outputs()
                .iter()
                .map(|y| self.output_scaling.to_internal(*y)),
        );
        -0.5 * y.dot(&self.alpha) - 0.5 * cholesky_log_det(&self.factor) - 0.5 * n * LN_2PI
            - n * self.output_scaling.scale.ln()
    }

    pub fn to_state(&self) -> GpState {
        GpState {
            kernel: self.kernel.clone(),
            noise_variance: self.noise_variance,
            data: self.data.clone(),
            input_domain: self.input_domain.clone(),
            output_scaling: self.output_scaling,
        }
    }

    pub fn from_state(state: GpState) -> Result<Self> {
        Self::from_parts(
            state.data,
            state.kernel,
            state.noise_variance,
            state.input_domain,
            state.output_scaling,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_state())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_state(serde_json::from_str(text)?)
    }
}

/// Everything needed to rebuild a [`GPRegressor`]; the factorization is recomputed on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpState {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    pub data: Dataset,
    pub input_domain: Option<BoxDomain>,
    pub output_scaling: OutputScaling,
}

pub(crate) fn scale_input(domain: &Option<BoxDomain>, x: &[f64]) -> Vec<f64> {
    match domain {
        Some(d) => d.to_unit(x),
        None => x.to_vec(),
    }
}

pub(crate) fn covariance(kernel: &KernelSpec, xs: &[Vec<f64>], noise_variance: f64) -> DMatrix<f64> {
    let n = xs.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let k = kernel.k(&xs[i], &xs[j]);
            c[(i, j)] = k;
            c[(j, i)] = k;
        }
        c[(i, i)] = kernel.k(&xs[i], &xs[i]) + noise_variance;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_point(noise: f64) -> GPRegressor {
        let data = Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap();
        GPRegressor::new(data, KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap(), noise).unwrap()
    }

    #[test]
    fn interpolates_noise_free_training_point() {
        let gp = one_point(0.0);
        let (m, v) = gp.predict(&[0.0]).unwrap();
        assert!((m - 1.0).abs() < 1e-12);
        assert!(v.abs() < 1e-9);
    }

    #[test]
    fn recovers_prior_far_from_data() {
        let gp = one_point(0.0);
        let (m, v) = gp.predict(&[1e3]).unwrap();
        assert!(m.abs() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scalar_log_likelihood() {
        let data = Dataset::new(vec![vec![0.0]], vec![0.0]).unwrap();
        // K + σ²I = 0.25 + 0.75 = 1
        let gp = GPRegressor::new(data, KernelSpec::matern32(vec![1.0], 0.25).unwrap(), 0.75).unwrap();
        assert!((gp.log_marginal_likelihood() + 0.5 * LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn diagonal_log_likelihood() {
        let data = Dataset::new(vec![vec![0.0], vec![1e4]], vec![0.0, 0.0]).unwrap();
        let gp = GPRegressor::new(data, KernelSpec::matern32(vec![1.0], 0.5).unwrap(), 0.5).unwrap();
        assert!((gp.log_marginal_likelihood() + LN_2PI).abs() < 1e-14);
    }

    #[test]
    fn query_dimension_is_checked() {
        assert!(one_point(0.0).predict(&[0.0, 1.0]).is_err());
        assert!(one_point(0.0).predict_mean(&[]).is_err());
    }

    #[test]
    fn rejects_bad_datasets() {
        assert!(Dataset::new(vec![vec![0.0]], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![vec![0.0], vec![0.0, 1.0]], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![vec![f64::NAN]], vec![1.0]).is_err());
        let data = Dataset::new(vec![vec![0.0]], vec![1.0]).unwrap();
        let k = KernelSpec::matern32(vec![1.0], 1.0).unwrap();
        assert!(GPRegressor::new(data, k, -1.0).is_err());
    }

    #[test]
    fn empty_dataset_is_the_prior() {
        let gp = GPRegressor::new(Dataset::empty(2), KernelSpec::matern32(vec![1.0, 1.0], 3.0).unwrap(), 0.1).unwrap();
        assert_eq!(gp.predict(&[0.2, 0.4]).unwrap(), (0.0, 3.0));
    }

    #[test]
    fn standardization_shifts_prior_mean() {
        let data = Dataset::new(vec![vec![0.0], vec![1.0]], vec![4.0, 6.0]).unwrap();
        let scaling = OutputScaling::standardizing(data.outputs());
        assert_eq!(scaling, OutputScaling { mean: 5.0, scale: 1.0 });
        let gp = GPRegressor::from_parts(
            data,
            KernelSpec::matern32(vec![0.1], 1.0).unwrap(),
            0.0,
            None,
            scaling,
        )
        .unwrap();
        assert!((gp.predict_mean(&[100.0]).unwrap() - 5.0).abs() < 1e-12);
        assert!((gp.predict_mean(&[1.0]).unwrap() - 6.0).abs() < 1e-10);
    }

    #[test]
    fn json_round_trip_preserves_predictions() {
        let data = Dataset::new(vec![vec![0.1, 0.3], vec![0.7, 0.2], vec![0.4, 0.9]], vec![1.0, -0.5, 0.25]).unwrap();
        let gp = GPRegressor::from_parts(
            data.clone(),
            KernelSpec::matern32(vec![0.3, 0.6], 1.3).unwrap(),
            1e-3,
            Some(BoxDomain::new(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap()),
            OutputScaling::standardizing(data.outputs()),
        )
        .unwrap();
        let back = GPRegressor::from_json(&gp.to_json().unwrap()).unwrap();
        for q in [[0.2, 0.2], [1.5, 0.9], [0.0, 1.0]] {
            let (m1, v1) = gp.predict(&q).unwrap();
            let (m2, v2) = back.predict(&q).unwrap();
            assert!((m1 - m2).abs() <= 1e-10 && (v1 - v2).abs() <= 1e-10);
        }
    }
}
