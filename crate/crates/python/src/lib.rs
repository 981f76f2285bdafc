use std::path::PathBuf;

use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use ctxbo::harness::{self, ModelFile, RunConfig};
use ctxbo::solution::{adapt, SolutionModel};

fn to_py(e: ctxbo::Error) -> PyErr {
    match harness::exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        3 => PyArithmeticError::new_err(e.to_string()),
        _ => PyOSError::new_err(e.to_string()),
    }
}

/// A learned context-to-parameters map.
#[pyclass(name = "SolutionModel", module = "ctxbo_py")]
struct PySolutionModel {
    inner: SolutionModel,
}

#[pymethods]
impl PySolutionModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let inner = ModelFile::load(&path).and_then(|f| f.model()).map_err(to_py)?;
        Ok(Self { inner })
    }

    /// Controller parameters for a context.
    fn adapt(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        adapt(&self.inner, &theta).map_err(to_py)
    }

    /// Posterior mean and covariance of the parameters at a context.
    fn predict(&self, theta: Vec<f64>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let mean = self.inner.posterior_mean(&theta).map_err(to_py)?;
        let cov = self.inner.predictive_covariance(&theta).map_err(to_py)?;
        let rows = cov.row_iter().map(|r| r.iter().copied().collect()).collect();
        Ok((mean, rows))
    }

    #[getter]
    fn contexts(&self) -> Vec<Vec<f64>> {
        self.inner.contexts().to_vec()
    }

    #[getter]
    fn solutions(&self) -> Vec<Vec<f64>> {
        self.inner.solutions().to_vec()
    }

    /// Context grid points and adapted parameters, `grid` points per axis.
    fn heatmap(&self, grid: usize) -> PyResult<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let hm = harness::heatmap_grid(&self.inner, grid).map_err(to_py)?;
        Ok((hm.points, hm.values))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

fn parse_config(config_json: &str) -> PyResult<RunConfig> {
    RunConfig::from_json(config_json).map_err(to_py)
}

/// Runs a learning job from a JSON run configuration and returns the model.
#[pyfunction]
fn learn(config_json: &str, output_dir: PathBuf) -> PyResult<PySolutionModel> {
    let cfg = parse_config(config_json)?;
    let out = harness::run_learn(&cfg, &output_dir).map_err(to_py)?;
    Ok(PySolutionModel { inner: out.model })
}

/// Simulates one CAV episode and returns `(travel_time, coll_margin, accel_integral)`.
#[pyfunction]
#[pyo3(signature = (config_json, z, theta, output_dir, seed = 0))]
fn simulate(config_json: &str, z: Vec<f64>, theta: Vec<f64>, output_dir: PathBuf, seed: u64) -> PyResult<(f64, f64, f64)> {
    let cfg = parse_config(config_json)?;
    let out = harness::simulate_to_csv(&cfg, &z, &theta, seed, &output_dir).map_err(to_py)?;
    Ok((out.exit_time, out.coll_margin, out.accel_integral))
}

#[pymodule]
fn ctxbo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySolutionModel>()?;
    m.add_function(wrap_pyfunction!(learn, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
