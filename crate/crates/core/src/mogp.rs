//! Multi-output GP with the intrinsic coregionalization model (ICM):
//! `cov(f_q(x), f_q'(x')) = B_{qq'} κ(x, x')`.
//!
//! Observations are stored row-wise (all `Q` outputs of observation `i`
//! together). The joint covariance is assembled as `B ⊗ K`, so the stacked
//! output vector is output-major: entry `q·N + i` holds output `q` of
//! observation `i`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{input_err, Error, Result};
use crate::gp::linalg::{cholesky_inverse, cholesky_log_det, cholesky_solve, cholesky_with_jitter};
use crate::gp::regressor::{scale_input, OutputScaling};
use crate::gp::train::{bounded_lengthscales, input_ranges, starting_points};
use crate::gp::{KernelSpec, NoiseMode, TrainConfig};
use crate::optim::{lbfgs_box, LbfgsOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `B = A Aᵀ + diag(d)`, symmetric positive semidefinite by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoregionalizationMatrix {
    /// `Q × R`, row-major.
    a: Vec<Vec<f64>>,
    d: Vec<f64>,
}

impl CoregionalizationMatrix {
    pub fn new(a: Vec<Vec<f64>>, d: Vec<f64>) -> Result<Self> {
        let q = d.len();
        if q == 0 || a.len() != q {
            return input_err("coregionalization factor must have Q rows matching diag(d)");
        }
        let r = a[0].len();
        if r > q || a.iter().any(|row| row.len() != r) {
            return input_err("coregionalization rank R must satisfy R <= Q with equal-length rows");
        }
        if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || a.iter().flatten().any(|v| !v.is_finite()) {
            return input_err("coregionalization entries must be finite with d >= 0");
        }
        Ok(Self { a, d })
    }

    pub fn identity(q: usize) -> Self {
        let a = (0..q)
            .map(|i| (0..q).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { a, d: vec![0.0; q] }
    }

    /// Full-rank `B = L Lᵀ` from a lower-triangular `L`.
    pub(crate) fn from_lower(l: &DMatrix<f64>) -> Self {
        let q = l.nrows();
        Self {
            a: (0..q).map(|i| (0..q).map(|j| l[(i, j)]).collect()).collect(),
            d: vec![0.0; q],
        }
    }

    pub fn outputs(&self) -> usize {
        self.d.len()
    }

    pub fn rank(&self) -> usize {
        self.a[0].len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let q = self.outputs();
        DMatrix::from_fn(q, q, |i, j| {
            let dot: f64 = self.a[i].iter().zip(&self.a[j]).map(|(x, y)| x * y).sum();
            dot + if i == j { self.d[i] } else { 0.0 }
        })
    }

    /// `B_ij / sqrt(B_ii B_jj)`.
    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let b = self.matrix();
        b[(i, j)] / (b[(i, i)] * b[(j, j)]).sqrt()
    }
}

/// Inputs plus `Q`-vector outputs, one row per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiOutputDataset {
    input_dim: usize,
    output_dim: usize,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

impl MultiOutputDataset {
    pub fn empty(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_dim,
            output_dim,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn new(inputs: Vec<Vec<f64>>, outputs: Vec<Vec<f64>>) -> Result<Self> {
        let (Some(x0), Some(y0)) = (inputs.first(), outputs.first()) else {
            return input_err("use MultiOutputDataset::empty for a dataset without observations");
        };
        let mut data = Self::empty(x0.len(), y0.len());
        if inputs.len() != outputs.len() {
            return input_err(format!("{} input rows but {} output rows", inputs.len(), outputs.len()));
        }
        for (x, y) in inputs.into_iter().zip(outputs) {
            data.push(x, y)?;
        }
        Ok(data)
    }

    pub fn push(&mut self, x: Vec<f64>, y: Vec<f64>) -> Result<()> {
        if x.len() != self.input_dim || y.len() != self.output_dim {
            return input_err(format!(
                "expected ({}, {})-dimensional observation, got ({}, {})",
                self.input_dim,
                self.output_dim,
                x.len(),
                y.len()
            ));
        }
        if !x.iter().chain(&y).all(|v| v.is_finite()) {
            return input_err("dataset entries must be finite");
        }
        self.inputs.push(x);
        self.outputs.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn outputs(&self) -> &[Vec<f64>] {
        &self.outputs
    }

    /// Column `q` of the outputs.
    pub fn output_column(&self, q: usize) -> Vec<f64> {
        self.outputs.iter().map(|y| y[q]).collect()
    }
}

/// ICM posterior over a fixed dataset.
#[derive(Debug, Clone)]
pub struct MOGPRegressor {
    base_kernel: KernelSpec,
    coregionalization: CoregionalizationMatrix,
    noise_variance: f64,
    data: MultiOutputDataset,
    input_domain: Option<BoxDomain>,
    output_scalings: Vec<OutputScaling>,
    scaled_inputs: Vec<Vec<f64>>,
    b: DMatrix<f64>,
    factor: DMatrix<f64>,
    alpha: DVector<f64>,
}

/// `B ⊗ K + σ² I` with `K` over `xs`.
pub(crate) fn icm_covariance(kernel: &KernelSpec, b: &DMatrix<f64>, xs: &[Vec<f64>], noise: f64) -> DMatrix<f64> {
    let n = xs.len();
    let q = b.nrows();
    let k = crate::gp::regressor::covariance(kernel, xs, 0.0);
    let mut c = b.kronecker(&k);
    for i in 0..n * q {
        c[(i, i)] += noise;
    }
    c
}

/// Output-major stacking of standardized outputs.
fn stacked_outputs(data: &MultiOutputDataset, scalings: &[OutputScaling]) -> DVector<f64> {
    let n = data.len();
    let q = data.output_dim();
    DVector::from_fn(n * q, |idx, _| {
        let (qi, i) = (idx / n, idx % n);
        scalings[qi].to_internal(data.outputs()[i][qi])
    })
}

impl MOGPRegressor {
    pub fn new(
        data: MultiOutputDataset,
        base_kernel: KernelSpec,
        coregionalization: CoregionalizationMatrix,
        noise_variance: f64,
    ) -> Result<Self> {
        let q = data.output_dim();
        Self::from_parts(
            data,
            base_kernel,
            coregionalization,
            noise_variance,
            None,
            vec![OutputScaling::identity(); q],
        )
    }

    pub fn from_parts(
        data: MultiOutputDataset,
        base_kernel: KernelSpec,
        coregionalization: CoregionalizationMatrix,
        noise_variance: f64,
        input_domain: Option<BoxDomain>,
        output_scalings: Vec<OutputScaling>,
    ) -> Result<Self> {
        base_kernel.validate()?;
        let q = data.output_dim();
        if coregionalization.outputs() != q || output_scalings.len() != q || q == 0 {
            return input_err(format!(
                "output dimension mismatch: data Q={q}, B is {0}x{0}, {1} output scalings",
                coregionalization.outputs(),
                output_scalings.len()
            ));
        }
        if data.input_dim() != base_kernel.input_dim() {
            return input_err("kernel and data input dimensions differ");
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return input_err(format!("noise variance must be nonnegative, got {noise_variance}"));
        }
        let scaled_inputs: Vec<Vec<f64>> = data.inputs().iter().map(|x| scale_input(&input_domain, x)).collect();
        let b = coregionalization.matrix();
        let c = icm_covariance(&base_kernel, &b, &scaled_inputs, noise_variance);
        let jitter_scale = b.diagonal().max() * base_kernel.signal_variance();
        let (factor, _) = cholesky_with_jitter(&c, jitter_scale.max(f64::MIN_POSITIVE))?;
        let y = stacked_outputs(&data, &output_scalings);
        let alpha = cholesky_solve(&factor, &y);
        Ok(Self {
            base_kernel,
            coregionalization,
            noise_variance,
            data,
            input_domain,
            output_scalings,
            scaled_inputs,
            b,
            factor,
            alpha,
        })
    }

    pub fn outputs(&self) -> usize {
        self.b.nrows()
    }

    pub fn base_kernel(&self) -> &KernelSpec {
        &self.base_kernel
    }

    pub fn coregionalization(&self) -> &CoregionalizationMatrix {
        &self.coregionalization
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn data(&self) -> &MultiOutputDataset {
        &self.data
    }

    pub fn output_scalings(&self) -> &[OutputScaling] {
        &self.output_scalings
    }

    pub fn input_domain(&self) -> Option<&BoxDomain> {
        self.input_domain.as_ref()
    }

    /// `B ⊗ K + σ² I` over the transformed training inputs.
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        icm_covariance(&self.base_kernel, &self.b, &self.scaled_inputs, self.noise_variance)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.base_kernel.input_dim() {
            return input_err(format!(
                "query is {}-dimensional, model expects {}",
                x.len(),
                self.base_kernel.input_dim()
            ));
        }
        Ok(())
    }

    /// `K^(M)_*ᵀ = (B ⊗ k_*)ᵀ`, an `NQ × Q` matrix.
    fn cross_covariance(&self, xs: &[f64]) -> DMatrix<f64> {
        let n = self.data.len();
        let q = self.outputs();
        let kstar: Vec<f64> = self.scaled_inputs.iter().map(|xi| self.base_kernel.k(xs, xi)).collect();
        DMatrix::from_fn(n * q, q, |row, col| self.b[(col, row / n)] * kstar[row % n])
    }

    fn rescale(&self, mean: DVector<f64>, cov: DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let s = &self.output_scalings;
        let mean = DVector::from_fn(mean.len(), |i, _| s[i].mean + s[i].scale * mean[i]);
        let cov = DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| cov[(i, j)] * s[i].scale * s[j].scale);
        (mean, cov)
    }

    /// Predictive mean and covariance before any PSD clamping.
    pub fn predict_unclamped(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_dim(x)?;
        let xs = scale_input(&self.input_domain, x);
        let prior = &self.b * self.base_kernel.k(&xs, &xs);
        if self.data.is_empty() {
            return Ok(self.rescale(DVector::zeros(self.outputs()), prior));
        }
        let kt = self.cross_covariance(&xs);
        let mean = kt.tr_mul(&self.alpha);
        let v = self
            .factor
            .solve_lower_triangular(&kt)
            .ok_or_else(|| Error::Numerical("degenerate factorization".into()))?;
        let cov = prior - v.tr_mul(&v);
        let cov = 0.5 * (&cov + cov.transpose());
        Ok(self.rescale(mean, cov))
    }

    /// Predictive mean vector and covariance matrix, the latter projected onto
    /// the PSD cone.
    pub fn predict(&self, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let (mean, cov) = self.predict_unclamped(x)?;
        Ok((mean, clamp_psd(cov)))
    }

    /// Predictive mean only.
    pub fn predict_mean(&self, x: &[f64]) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        let xs = scale_input(&self.input_domain, x);
        if self.data.is_empty() {
            return Ok(self.rescale(DVector::zeros(self.outputs()), DMatrix::zeros(0, 0)).0);
        }
        let kt = self.cross_covariance(&xs);
        Ok(self.rescale(kt.tr_mul(&self.alpha), DMatrix::zeros(0, 0)).0)
    }

    /// Log marginal likelihood of the outputs in their original units.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let y = stacked_outputs(&self.data, &self.output_scalings);
        let n = self.data.len() as f64;
        -0.5 * y.dot(&self.alpha) - 0.5 * cholesky_log_det(&self.factor) - 0.5 * y.len() as f64 * LN_2PI
            - n * self.output_scalings.iter().map(|s| s.scale.ln()).sum::<f64>()
    }

    pub fn to_state(&self) -> MogpState {
        MogpState {
            base_kernel: self.base_kernel.clone(),
            coregionalization: self.coregionalization.clone(),
            noise_variance: self.noise_variance,
            data: self.data.clone(),
            input_domain: self.input_domain.clone(),
            output_scalings: self.output_scalings.clone(),
        }
    }

    pub fn from_state(state: MogpState) -> Result<Self> {
        Self::from_parts(
            state.data,
            state.base_kernel,
            state.coregionalization,
            state.noise_variance,
            state.input_domain,
            state.output_scalings,
        )
    }

    /// Same hyperparameters, new data; output standardization recomputed.
    pub fn condition_on(&self, data: MultiOutputDataset) -> Result<Self> {
        let scalings = (0..data.output_dim())
            .map(|q| OutputScaling::standardizing(&data.output_column(q)))
            .collect();
        Self::from_parts(
            data,
            self.base_kernel.clone(),
            self.coregionalization.clone(),
            self.noise_variance,
            self.input_domain.clone(),
            scalings,
        )
    }
}

/// Serializable form of an [`MOGPRegressor`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MogpState {
    pub base_kernel: KernelSpec,
    pub coregionalization: CoregionalizationMatrix,
    pub noise_variance: f64,
    pub data: MultiOutputDataset,
    pub input_domain: Option<BoxDomain>,
    pub output_scalings: Vec<OutputScaling>,
}

fn clamp_psd(cov: DMatrix<f64>) -> DMatrix<f64> {
    if cov.nrows() == 1 {
        return DMatrix::from_element(1, 1, cov[(0, 0)].max(0.0));
    }
    let eig = cov.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|e| *e >= 0.0) {
        return cov;
    }
    let clamped = eig.eigenvalues.map(|e| e.max(0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}

/// Parameter layout: `[log ℓ_1..log ℓ_D, log L_11², .., log L_QQ², L_ij (i>j, row-major), log σ_n²]`.
/// With `Q = 1` this coincides with the single-output layout.
struct IcmLayout {
    dim: usize,
    q: usize,
    learn_noise: bool,
}

impl IcmLayout {
    fn lower_factor(&self, p: &[f64]) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.q, self.q);
        for i in 0..self.q {
            l[(i, i)] = (0.5 * p[self.dim + i]).exp();
        }
        let mut idx = self.dim + self.q;
        for i in 0..self.q {
            for j in 0..i {
                l[(i, j)] = p[idx];
                idx += 1;
            }
        }
        l
    }

    fn noise_index(&self) -> usize {
        self.dim + self.q + self.q * (self.q - 1) / 2
    }

    fn len(&self) -> usize {
        self.noise_index() + usize::from(self.learn_noise)
    }
}

fn icm_lml_and_grad(
    template: &KernelSpec,
    layout: &IcmLayout,
    xs: &[Vec<f64>],
    y: &DVector<f64>,
    p: &[f64],
    fixed_noise: Option<f64>,
) -> Option<(f64, Vec<f64>)> {
    let (dim, q, n) = (layout.dim, layout.q, xs.len());
    let kernel = template
        .with_hyperparameters(p[..dim].iter().map(|v| v.exp()).collect(), 1.0)
        .ok()?;
    let l = layout.lower_factor(p);
    let b = &l * l.transpose();
    let noise = fixed_noise.unwrap_or_else(|| p[layout.noise_index()].exp());

    let c = icm_covariance(&kernel, &b, xs, noise);
    let (chol, _) = cholesky_with_jitter(&c, b.diagonal().max()).ok()?;
    let alpha = cholesky_solve(&chol, y);
    let lml = -0.5 * y.dot(&alpha) - 0.5 * cholesky_log_det(&chol) - 0.5 * (n * q) as f64 * LN_2PI;

    let mut w: DMatrix<f64> = -cholesky_inverse(&chol);
    w.ger(1.0, &alpha, &alpha, 1.0);

    // M_ij = Σ_qq' W[(q,i),(q',j)] B_qq' ; G_qq' = ½ Σ_ij W[(q,i),(q',j)] K_ij
    let k = crate::gp::regressor::covariance(&kernel, xs, 0.0);
    let mut m = DMatrix::zeros(n, n);
    let mut g = DMatrix::zeros(q, q);
    for a in 0..q {
        for bq in 0..q {
            let block = w.view((a * n, bq * n), (n, n));
            m += block * b[(a, bq)];
            g[(a, bq)] = 0.5 * block.component_mul(&k).sum();
        }
    }

    let mut grad = vec![0.0; layout.len()];
    let mut dk = vec![0.0; dim];
    for i in 0..n {
        for j in 0..i {
            kernel.lengthscale_grad_from_value(&xs[i], &xs[j], k[(j, i)], &mut dk);
            for d in 0..dim {
                grad[d] += m[(j, i)] * dk[d];
            }
        }
    }
    // ∂ℓ/∂L = 2 G L
    let dl = 2.0 * &g * &l;
    for i in 0..q {
        grad[dim + i] = dl[(i, i)] * 0.5 * l[(i, i)];
    }
    let mut idx = dim + q;
    for i in 0..q {
        for j in 0..i {
            grad[idx] = dl[(i, j)];
            idx += 1;
        }
    }
    if fixed_noise.is_none() {
        grad[layout.noise_index()] = 0.5 * noise * w.trace();
    }
    Some((lml, grad))
}

/// Jointly fits base-kernel lengthscales, the coregionalization factor and
/// the shared noise variance. The base kernel's signal variance is absorbed
/// into `B`; `base_spec`'s signal variance seeds the diagonal of `B`.
pub fn mogp_fit(
    data: &MultiOutputDataset,
    base_spec: &KernelSpec,
    q: usize,
    cfg: &TrainConfig,
) -> Result<MOGPRegressor> {
    cfg.validate()?;
    base_spec.validate()?;
    if data.is_empty() {
        return input_err("cannot fit a multi-output GP to an empty dataset");
    }
    if data.output_dim() != q || q == 0 {
        return input_err(format!("expected {q}-vector outputs, data has {}", data.output_dim()));
    }
    if data.input_dim() != base_spec.input_dim() {
        return input_err("kernel and data input dimensions differ");
    }
    let dim = base_spec.input_dim();
    let xs: Vec<Vec<f64>> = data.inputs().iter().map(|x| scale_input(&cfg.input_domain, x)).collect();
    let scalings: Vec<OutputScaling> = (0..q)
        .map(|qi| {
            if cfg.standardize_outputs {
                OutputScaling::standardizing(&data.output_column(qi))
            } else {
                OutputScaling::identity()
            }
        })
        .collect();
    let y = stacked_outputs(data, &scalings);
    let fixed_noise = match cfg.noise {
        NoiseMode::Fixed(v) => Some(v),
        NoiseMode::Learned => None,
    };
    let layout = IcmLayout {
        dim,
        q,
        learn_noise: fixed_noise.is_none(),
    };

    let ranges = input_ranges(&xs, dim, cfg.input_domain.is_some());
    let mut lower: Vec<f64> = ranges.iter().map(|r| (cfg.lengthscale_bounds.0 * r).ln()).collect();
    let mut upper: Vec<f64> = ranges.iter().map(|r| (cfg.lengthscale_bounds.1 * r).ln()).collect();
    let mut initial: Vec<f64> = base_spec.lengthscales().iter().map(|l| l.ln()).collect();
    for _ in 0..q {
        lower.push(cfg.signal_variance_bounds.0.ln());
        upper.push(cfg.signal_variance_bounds.1.ln());
        initial.push(base_spec.signal_variance().ln());
    }
    let off_bound = cfg.signal_variance_bounds.1.sqrt();
    for _ in 0..q * (q - 1) / 2 {
        lower.push(-off_bound);
        upper.push(off_bound);
        initial.push(0.0);
    }
    if layout.learn_noise {
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
            |p, g| match icm_lml_and_grad(base_spec, &layout, &xs, &y, p, fixed_noise) {
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
    let (p, _) = best.ok_or_else(|| Error::Numerical("no hyperparameter start produced a factorable covariance".into()))?;
    let kernel = base_spec.with_hyperparameters(bounded_lengthscales(&p[..dim], &ranges, cfg.lengthscale_bounds), 1.0)?;
    let coreg = CoregionalizationMatrix::from_lower(&layout.lower_factor(&p));
    let noise = match fixed_noise {
        Some(v) => v,
        None => p[layout.noise_index()].exp().clamp(cfg.noise_variance_bounds.0, cfg.noise_variance_bounds.1),
    };
    MOGPRegressor::from_parts(data.clone(), kernel, coreg, noise, cfg.input_domain.clone(), scalings)
}

/// Predictive `(mean, covariance)` at `x_star`.
pub fn mogp_predict(model: &MOGPRegressor, x_star: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    model.predict(x_star)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> MultiOutputDataset {
        MultiOutputDataset::new(
            vec![vec![0.1], vec![0.4], vec![0.9]],
            vec![vec![1.0, 0.5], vec![-0.3, 0.2], vec![0.7, -1.1]],
        )
        .unwrap()
    }

    #[test]
    fn kronecker_matches_elementwise_construction() {
        let data = small();
        let coreg = CoregionalizationMatrix::new(vec![vec![1.0, 0.0], vec![0.6, 0.8]], vec![0.1, 0.2]).unwrap();
        let kernel = KernelSpec::matern32(vec![0.3], 1.0).unwrap();
        let model = MOGPRegressor::new(data.clone(), kernel.clone(), coreg.clone(), 0.0).unwrap();
        let c = model.covariance_matrix();
        let b = coreg.matrix();
        let n = data.len();
        for q in 0..2 {
            for q2 in 0..2 {
                for i in 0..n {
                    for j in 0..n {
                        let expected = b[(q, q2)] * kernel.eval(&data.inputs()[i], &data.inputs()[j]).unwrap();
                        assert_eq!(c[(q * n + i, q2 * n + j)], expected);
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = small();
        let xs = data.inputs().to_vec();
        let scalings = vec![OutputScaling::identity(); 2];
        let y = stacked_outputs(&data, &scalings);
        let layout = IcmLayout {
            dim: 1,
            q: 2,
            learn_noise: true,
        };
        let template = KernelSpec::matern32(vec![1.0], 1.0).unwrap();
        let p = vec![(0.35f64).ln(), (1.2f64).ln(), (0.8f64).ln(), 0.4, (0.05f64).ln()];
        let (_, g) = icm_lml_and_grad(&template, &layout, &xs, &y, &p, None).unwrap();
        for i in 0..p.len() {
            let h = 1e-6;
            let mut up = p.clone();
            let mut dn = p.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (icm_lml_and_grad(&template, &layout, &xs, &y, &up, None).unwrap().0
                - icm_lml_and_grad(&template, &layout, &xs, &y, &dn, None).unwrap().0)
                / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn coregionalization_validation() {
        assert!(CoregionalizationMatrix::new(vec![vec![1.0]], vec![-0.1]).is_err());
        assert!(CoregionalizationMatrix::new(vec![vec![1.0, 0.0, 0.0]], vec![0.0]).is_err());
        let b = CoregionalizationMatrix::new(vec![vec![1.0], vec![2.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(b.rank(), 1);
        assert!((b.correlation(0, 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn output_dimension_mismatch_is_rejected() {
        let data = small();
        let k = KernelSpec::matern32(vec![1.0], 1.0).unwrap();
        assert!(MOGPRegressor::new(data.clone(), k.clone(), CoregionalizationMatrix::identity(3), 0.1).is_err());
        assert!(mogp_fit(&data, &k, 3, &TrainConfig::default()).is_err());
        let model = MOGPRegressor::new(data, k, CoregionalizationMatrix::identity(2), 0.1).unwrap();
        assert!(model.predict(&[0.0, 0.0]).is_err());
    }
}
