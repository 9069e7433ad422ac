//! Experiment configuration and the benchmark presets.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controller::{AlphaSchedule, BoxConstraint, ControllerParams, Mode};
use crate::error::{Error, Result};
use crate::objective::{Curvature, ObjectiveSpec, TimeVaryingObjectiveSchedule, BENCHMARK_PERIOD};
use crate::plant::{LinearSinePlant, PlantSpec};
use crate::sensitivity::{PerturbationScale, SensitivitySpec};
use crate::stochastics::RngStream;

use super::comparator::ComparatorOptions;

/// Step sizes and smoothing parameter of the benchmark experiments.
pub const STATIC_ETA: f64 = 2.5e-4;
pub const STATIC_ETA_MODEL_FREE: f64 = 2e-4;
pub const TV_ETA: f64 = 7.5e-5;
pub const TV_ETA_MODEL_FREE: f64 = 5e-5;
pub const BENCHMARK_DELTA: f64 = 1e-3;
pub const DEFAULT_HORIZON: usize = 20_000;
pub const DEFAULT_REPLICATES: usize = 30;
pub const DEFAULT_CSV_STRIDE: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Static,
    TimeVarying,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Static => "static",
            Scenario::TimeVarying => "time-varying",
        }
    }
}

/// One controller variant of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerSpec {
    pub label: String,
    pub mode: Mode,
    pub eta: f64,
    #[serde(default)]
    pub delta: f64,
    /// Required for gray-box controllers, ignored otherwise.
    #[serde(default)]
    pub schedule: Option<AlphaSchedule>,
    #[serde(default = "exact")]
    pub sensitivity: SensitivitySpec,
}

fn exact() -> SensitivitySpec {
    SensitivitySpec::Exact
}

impl ControllerSpec {
    pub fn params(&self) -> Result<ControllerParams> {
        let params = match self.mode {
            Mode::GrayBox => {
                let schedule = self.schedule.ok_or_else(|| {
                    Error::Config(format!("gray-box controller '{}' needs a schedule", self.label))
                })?;
                ControllerParams::gray_box(self.eta, self.delta, schedule)
            }
            Mode::ModelBased => ControllerParams::model_based(self.eta),
            Mode::ModelFree => ControllerParams::model_free(self.eta, self.delta),
        };
        params
            .validate()
            .map_err(|e| Error::Config(format!("controller '{}': {e}", self.label)))?;
        Ok(params)
    }
}

/// Objective regeneration for time-varying experiments; dimensions come from the plant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleSpec {
    pub seed: Option<u64>,
    pub period: usize,
    pub lambda: f64,
    pub curvature: Curvature,
    pub disturbance_range: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            seed: None,
            period: BENCHMARK_PERIOD,
            lambda: 0.0,
            curvature: Curvature::default(),
            disturbance_range: 1.0,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self, master_seed: u64, plant: &LinearSinePlant) -> Result<TimeVaryingObjectiveSchedule> {
        let dims = plant.dims();
        let schedule = TimeVaryingObjectiveSchedule {
            seed: self.seed.unwrap_or(master_seed),
            period: self.period,
            p: dims.p,
            r_x: dims.r_x,
            r_y: dims.r_y,
            lambda: self.lambda,
            curvature: self.curvature,
            disturbance_range: self.disturbance_range,
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Input box of a time-varying experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ConstraintSpec {
    /// Two draws from `N(mean, std^2 I)`, sorted componentwise into lower and upper bounds.
    Random {
        seed: Option<u64>,
        #[serde(default)]
        mean: f64,
        #[serde(default = "one")]
        std: f64,
        #[serde(default)]
        deflation: f64,
        #[serde(default = "one")]
        inflation: f64,
    },
    Literal {
        lower: Vec<f64>,
        upper: Vec<f64>,
        #[serde(default)]
        deflation: f64,
        #[serde(default = "one")]
        inflation: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        ConstraintSpec::Random {
            seed: None,
            mean: 0.0,
            std: 1.0,
            deflation: 0.0,
            inflation: 1.0,
        }
    }
}

impl ConstraintSpec {
    pub fn build(&self, master_seed: u64, p: usize) -> Result<BoxConstraint> {
        match self {
            ConstraintSpec::Random {
                seed,
                mean,
                std,
                deflation,
                inflation,
            } => {
                if !(*std >= 0.0) {
                    return Err(Error::Config(format!("box spread must be nonnegative, got {std}")));
                }
                let mut rng = RngStream::new(seed.unwrap_or(master_seed), 4);
                let a = rng.normal_vector(p) * *std;
                let b = rng.normal_vector(p) * *std;
                let lower = DVector::from_fn(p, |i, _| mean + a[i].min(b[i]));
                let upper = DVector::from_fn(p, |i, _| mean + a[i].max(b[i]));
                BoxConstraint::new(lower, upper)?
                    .with_deflation(*deflation)?
                    .with_inflation(*inflation)
            }
            ConstraintSpec::Literal {
                lower,
                upper,
                deflation,
                inflation,
            } => {
                if lower.len() != p || upper.len() != p {
                    return Err(Error::Config(format!("box bounds must have {p} entries")));
                }
                BoxConstraint::new(DVector::from_column_slice(lower), DVector::from_column_slice(upper))?
                    .with_deflation(*deflation)?
                    .with_inflation(*inflation)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub horizon: usize,
    pub replicates: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Every `csv_stride`-th step (and the last one) is written to the CSV.
    #[serde(default = "default_stride")]
    pub csv_stride: usize,
    #[serde(default)]
    pub plant: PlantSpec,
    /// Static experiments only.
    #[serde(default)]
    pub objective: ObjectiveSpec,
    /// Time-varying experiments only.
    #[serde(default)]
    pub schedule: ScheduleSpec,
    /// Time-varying experiments only.
    #[serde(default)]
    pub constraint: ConstraintSpec,
    #[serde(default)]
    pub comparator: ComparatorOptions,
    pub controllers: Vec<ControllerSpec>,
}

fn default_stride() -> usize {
    DEFAULT_CSV_STRIDE
}

fn controller(
    label: &str,
    mode: Mode,
    eta: f64,
    delta: f64,
    schedule: Option<AlphaSchedule>,
    sensitivity: SensitivitySpec,
) -> ControllerSpec {
    ControllerSpec {
        label: label.into(),
        mode,
        eta,
        delta,
        schedule,
        sensitivity,
    }
}

/// Sensitivity learning: model-based updates from a recursively estimated
/// sensitivity, with exploration supplying the excitation.
fn learning_controller(eta: f64, prior_bound: f64, prior_scale: PerturbationScale) -> ControllerSpec {
    controller(
        "sensitivity-learning",
        Mode::GrayBox,
        eta,
        BENCHMARK_DELTA,
        Some(AlphaSchedule::Fixed { alpha: 1.0 }),
        SensitivitySpec::Learned {
            forgetting: 0.99,
            initial_covariance: 1e3,
            prior_bound,
            prior_scale,
        },
    )
}

impl ExperimentConfig {
    /// Unconstrained static benchmark on the seeded nonlinear plant.
    pub fn static_benchmark() -> Self {
        let inexact = SensitivitySpec::FixedPerturbed {
            bound: 0.1,
            scale: PerturbationScale::MaxElement,
        };
        Self {
            scenario: Scenario::Static,
            seed: 0,
            horizon: DEFAULT_HORIZON,
            replicates: DEFAULT_REPLICATES,
            output: None,
            csv_stride: DEFAULT_CSV_STRIDE,
            plant: PlantSpec::default(),
            objective: ObjectiveSpec::default(),
            schedule: ScheduleSpec::default(),
            constraint: ConstraintSpec::default(),
            comparator: ComparatorOptions::default(),
            controllers: vec![
                controller("model-based-exact", Mode::ModelBased, STATIC_ETA, 0.0, None, SensitivitySpec::Exact),
                controller("model-based-inexact", Mode::ModelBased, STATIC_ETA, 0.0, None, inexact.clone()),
                learning_controller(STATIC_ETA, 0.1, PerturbationScale::MaxElement),
                controller(
                    "model-free",
                    Mode::ModelFree,
                    STATIC_ETA_MODEL_FREE,
                    BENCHMARK_DELTA,
                    None,
                    SensitivitySpec::Exact,
                ),
                controller(
                    "gray-box",
                    Mode::GrayBox,
                    STATIC_ETA,
                    BENCHMARK_DELTA,
                    Some(AlphaSchedule::StaticBounded { c: 100.0 }),
                    inexact,
                ),
            ],
        }
    }

    /// Box-constrained benchmark whose objective and disturbances change every epoch.
    pub fn tv_benchmark() -> Self {
        let inexact = SensitivitySpec::FixedPerturbed {
            bound: 0.3,
            scale: PerturbationScale::Elementwise,
        };
        Self {
            scenario: Scenario::TimeVarying,
            controllers: vec![
                controller("model-based-exact", Mode::ModelBased, TV_ETA, 0.0, None, SensitivitySpec::Exact),
                controller("model-based-inexact", Mode::ModelBased, TV_ETA, 0.0, None, inexact.clone()),
                learning_controller(TV_ETA, 0.3, PerturbationScale::Elementwise),
                controller(
                    "model-free",
                    Mode::ModelFree,
                    TV_ETA_MODEL_FREE,
                    BENCHMARK_DELTA,
                    None,
                    SensitivitySpec::Exact,
                ),
                controller(
                    "gray-box",
                    Mode::GrayBox,
                    TV_ETA,
                    BENCHMARK_DELTA,
                    Some(AlphaSchedule::TvBounded { c: 1.0 }),
                    inexact,
                ),
            ],
            ..Self::static_benchmark()
        }
    }

    pub fn preset(scenario: Scenario) -> Self {
        match scenario {
            Scenario::Static => Self::static_benchmark(),
            Scenario::TimeVarying => Self::tv_benchmark(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least one step".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("at least one replicate is required".into()));
        }
        if self.csv_stride == 0 {
            return Err(Error::Config("CSV stride must be positive".into()));
        }
        if self.controllers.is_empty() {
            return Err(Error::Config("no controllers configured".into()));
        }
        for (i, c) in self.controllers.iter().enumerate() {
            if c.label.is_empty() || c.label.contains([',', '"', '\n']) {
                return Err(Error::Config(format!("controller label '{}' is not CSV-safe", c.label)));
            }
            if self.controllers[..i].iter().any(|o| o.label == c.label) {
                return Err(Error::Config(format!("duplicate controller label '{}'", c.label)));
            }
            c.params()?;
        }
        self.comparator.validate()
    }

    /// Keeps only the listed controllers, in the listed order.
    pub fn select_controllers(&mut self, labels: &[String]) -> Result<()> {
        let mut picked = Vec::with_capacity(labels.len());
        for l in labels {
            let c = self
                .controllers
                .iter()
                .find(|c| &c.label == l)
                .ok_or_else(|| Error::Config(format!("unknown controller '{l}'")))?;
            picked.push(c.clone());
        }
        self.controllers = picked;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for cfg in [ExperimentConfig::static_benchmark(), ExperimentConfig::tv_benchmark()] {
            cfg.validate().unwrap();
            let text = cfg.to_toml_string().unwrap();
            let back = ExperimentConfig::from_toml_str(&text).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn minimal_toml() {
        let text = r#"
            scenario = "static"
            seed = 3
            horizon = 10
            replicates = 1

            [[controllers]]
            label = "gb"
            mode = "gray-box"
            eta = 1e-3
            delta = 1e-3
            schedule = { kind = "static-bounded", c = 100.0 }
            sensitivity = { kind = "fixed-perturbed", bound = 0.1 }
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.csv_stride, DEFAULT_CSV_STRIDE);
        assert_eq!(cfg.plant, PlantSpec::default());
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = ExperimentConfig::static_benchmark();
        cfg.horizon = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::static_benchmark();
        cfg.controllers[4].schedule = None;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::static_benchmark();
        cfg.controllers[3].delta = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::static_benchmark();
        cfg.controllers[1].label = "model-based-exact".into();
        assert!(cfg.validate().is_err());
        assert!(ExperimentConfig::from_toml_str("scenario = 3").is_err());
    }

    #[test]
    fn random_box_is_ordered() {
        let b = ConstraintSpec::default().build(5, 10).unwrap();
        assert!(b.lower().iter().zip(b.upper().iter()).all(|(l, u)| l <= u));
        assert_eq!(b, ConstraintSpec::default().build(5, 10).unwrap());
    }

    #[test]
    fn controller_selection() {
        let mut cfg = ExperimentConfig::static_benchmark();
        cfg.select_controllers(&["gray-box".into(), "model-free".into()]).unwrap();
        assert_eq!(cfg.controllers.len(), 2);
        assert_eq!(cfg.controllers[0].label, "gray-box");
        assert!(cfg.select_controllers(&["nope".into()]).is_err());
    }
}
