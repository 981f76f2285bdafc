use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::benchmark::BenchmarkId;
use crate::contextual_bo::{AcquisitionConfig, SurrogateConfig};
use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::sim::{MetricConfig, SimConfig};
use crate::solution::{OuterLoopConfig, SolutionConfig};

/// Environment variable that overrides every configured output directory.
pub const OUTPUT_DIR_ENV: &str = "CTXBO_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorConfig {
    AnalyticBenchmark {
        id: BenchmarkId,
        #[serde(default)]
        noise_std: f64,
    },
    CavSim {
        #[serde(default)]
        sim: SimConfig,
        #[serde(default)]
        metric: MetricConfig,
    },
}

impl EvaluatorConfig {
    fn default_domains(&self) -> (BoxDomain, BoxDomain) {
        match self {
            EvaluatorConfig::AnalyticBenchmark { id, .. } => (id.z_domain(), id.theta_domain()),
            EvaluatorConfig::CavSim { .. } => {
                let d = BoxDomain::cube(2, -2.0, 2.0).expect("valid bounds");
                (d.clone(), d)
            }
        }
    }
}

/// Everything a learning run needs; serialized into every artifact it writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub evaluator: EvaluatorConfig,
    /// Defaults to the evaluator's natural domain.
    #[serde(default)]
    pub z_domain: Option<BoxDomain>,
    #[serde(default)]
    pub theta_domain: Option<BoxDomain>,
    pub j_max: usize,
    pub k_max: usize,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_max_data")]
    pub max_data: usize,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub acquisition: Option<AcquisitionConfig>,
    #[serde(default)]
    pub surrogate: Option<SurrogateConfig>,
    #[serde(default)]
    pub solution: Option<SolutionConfig>,
}

fn default_beta() -> f64 {
    AcquisitionConfig::default().beta
}

fn default_max_data() -> usize {
    SurrogateConfig::default().max_data
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("output")
}

fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

/// Reports any failure of `f` as a configuration error.
fn as_config<T>(what: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config(m) => Error::Config(m),
        other => Error::Config(format!("{what}: {other}")),
    })
}

impl RunConfig {
    pub fn new(evaluator: EvaluatorConfig, j_max: usize, k_max: usize, seed: u64) -> Self {
        Self {
            evaluator,
            z_domain: None,
            theta_domain: None,
            j_max,
            k_max,
            beta: default_beta(),
            max_data: default_max_data(),
            seed,
            output_dir: default_output_dir(),
            acquisition: None,
            surrogate: None,
            solution: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn domains(&self) -> (BoxDomain, BoxDomain) {
        let (z, theta) = self.evaluator.default_domains();
        (
            self.z_domain.clone().unwrap_or(z),
            self.theta_domain.clone().unwrap_or(theta),
        )
    }

    pub fn outer_loop_config(&self) -> OuterLoopConfig {
        OuterLoopConfig {
            j_max: self.j_max,
            k_max: self.k_max,
            acquisition: AcquisitionConfig {
                beta: self.beta,
                ..self.acquisition.clone().unwrap_or_default()
            },
            surrogate: SurrogateConfig {
                max_data: self.max_data,
                ..self.surrogate.clone().unwrap_or_default()
            },
            solution: self.solution.clone().unwrap_or_default(),
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_max == 0 || self.k_max == 0 {
            return config_err(format!("j_max and k_max must be at least 1 (got {} and {})", self.j_max, self.k_max));
        }
        if self.max_data == 0 {
            return config_err("max_data must be at least 1");
        }
        let (z, theta) = self.domains();
        as_config("z_domain", z.validate())?;
        as_config("theta_domain", theta.validate())?;
        match &self.evaluator {
            EvaluatorConfig::AnalyticBenchmark { id, noise_std } => {
                if z.dim() != id.z_domain().dim() || theta.dim() != id.theta_domain().dim() {
                    return config_err(format!("benchmark {id:?} needs {}-dimensional domains", id.z_domain().dim()));
                }
                if !(*noise_std >= 0.0 && noise_std.is_finite()) {
                    return config_err("noise_std must be finite and nonnegative");
                }
            }
            EvaluatorConfig::CavSim { sim, metric } => {
                if z.dim() != 2 || theta.dim() != 2 {
                    return config_err("the CAV simulation needs 2-dimensional z and theta domains");
                }
                as_config("sim", sim.validate())?;
                as_config("metric", metric.validate())?;
            }
        }
        as_config("loop parameters", self.outer_loop_config().validate())
    }
}

/// A controller taking part in a comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerSpec {
    /// Weights from a learned solution model, adapted to each episode's context.
    Adaptive { name: String, model: PathBuf },
    /// Fixed log10 CAV weights.
    Fixed { name: String, z: Vec<f64> },
}

impl ControllerSpec {
    pub fn name(&self) -> &str {
        match self {
            ControllerSpec::Adaptive { name, .. } | ControllerSpec::Fixed { name, .. } => name,
        }
    }
}

/// Paired closed-loop comparison of several controllers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonSpec {
    pub controllers: Vec<ControllerSpec>,
    pub episodes: usize,
    /// Contexts are drawn uniformly from this box.
    #[serde(default = "default_context_box")]
    pub contexts: BoxDomain,
    #[serde(default)]
    pub sim: SimConfig,
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_context_box() -> BoxDomain {
    BoxDomain::cube(2, -2.0, 2.0).expect("valid bounds")
}

impl ComparisonSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("cannot parse comparison spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.controllers.len() < 2 {
            return config_err("a comparison needs at least two controllers");
        }
        if self.episodes == 0 {
            return config_err("episodes must be at least 1");
        }
        let mut names: Vec<&str> = self.controllers.iter().map(|c| c.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return config_err("controller names must be unique");
        }
        for c in &self.controllers {
            if c.name().is_empty() || c.name().contains(['/', '\\']) {
                return config_err(format!("controller name {:?} is not usable as a file name", c.name()));
            }
            if let ControllerSpec::Fixed { z, .. } = c {
                if z.len() != 2 || !z.iter().all(|v| v.is_finite()) {
                    return config_err(format!("fixed controller {:?} needs two finite weights", c.name()));
                }
            }
        }
        as_config("contexts", self.contexts.validate())?;
        if self.contexts.dim() != 2 {
            return config_err("contexts must be 2-dimensional");
        }
        as_config("sim", self.sim.validate())
    }
}

/// `CTXBO_OUTPUT_DIR` when set and non-empty, otherwise `configured`.
pub fn resolve_output_dir(configured: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => configured.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "evaluator": {"analytic_benchmark": {"id": "quadratic_1d"}},
        "j_max": 3, "k_max": 4, "seed": 7
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.beta, 100.0);
        assert_eq!(cfg.max_data, 300);
        assert_eq!(cfg.domains().0, BoxDomain::unit(1));
        let outer = cfg.outer_loop_config();
        assert_eq!((outer.j_max, outer.k_max, outer.seed), (3, 4, 7));
    }

    #[test]
    fn zero_iterations_is_a_config_error() {
        let text = MINIMAL.replace("\"j_max\": 3", "\"j_max\": 0");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn malformed_and_mismatched_configs_are_config_errors() {
        assert!(matches!(RunConfig::from_json("{"), Err(Error::Config(_))));
        let text = MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"z_domain\": {\"lower\": [0, 0], \"upper\": [1, 1]}");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))));
        let text = MINIMAL.replace("\"seed\": 7", "\"seed\": 7, \"beta\": -1");
        assert!(matches!(RunConfig::from_json(&text), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = RunConfig::new(
            EvaluatorConfig::CavSim {
                sim: SimConfig::default(),
                metric: MetricConfig::default(),
            },
            2,
            3,
            1,
        );
        cfg.beta = 4.0;
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn comparison_needs_two_distinct_controllers() {
        let one = r#"{"controllers": [{"fixed": {"name": "a", "z": [0, 0]}}], "episodes": 1, "seed": 0}"#;
        assert!(matches!(ComparisonSpec::from_json(one), Err(Error::Config(_))));
        let dup = r#"{"controllers": [{"fixed": {"name": "a", "z": [0, 0]}}, {"fixed": {"name": "a", "z": [1, 0]}}],
                      "episodes": 1, "seed": 0}"#;
        assert!(matches!(ComparisonSpec::from_json(dup), Err(Error::Config(_))));
    }
}
