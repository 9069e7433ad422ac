//! Steady-state objectives `Phi(u, y)` and the reduced objective `Phi(u, h(u, d))`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::plant::{from_rows, to_rows, LinearSinePlant};
use crate::stochastics::RngStream;

/// Cubic coefficient of the static benchmark objective.
pub const BENCHMARK_LAMBDA: f64 = 5e-3;
/// Steps between regenerations of the time-varying benchmark objective.
pub const BENCHMARK_PERIOD: usize = 5_000;

const SCHEDULE_STREAM_TAG: u64 = 0x7456;

/// What a controller is allowed to know about the objective: its value and
/// partial gradients at a measured input-output pair.
pub trait Objective {
    fn value(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64;
    fn grad_u(&self, u: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;
    fn grad_y(&self, u: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;
}

/// `Phi(u, y) = -lambda ||u||^3 + u' M1 u + m2' u + ||y||^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubicQuadraticObjective {
    m1: DMatrix<f64>,
    m2: DVector<f64>,
    lambda: f64,
}

impl CubicQuadraticObjective {
    pub fn new(m1: DMatrix<f64>, m2: DVector<f64>, lambda: f64) -> Result<Self> {
        let p = m2.len();
        check_dim("M1 rows", p, m1.nrows())?;
        check_dim("M1 columns", p, m1.ncols())?;
        if !(lambda >= 0.0) {
            return Err(Error::Config(format!("cubic coefficient must be nonnegative, got {lambda}")));
        }
        let asym = (&m1 - m1.transpose()).amax();
        if asym > 1e-12 * m1.amax().max(1.0) {
            return Err(Error::Config("M1 must be symmetric".into()));
        }
        if m1.clone().cholesky().is_none() {
            return Err(Error::Config("M1 must be positive definite".into()));
        }
        Ok(Self { m1, m2, lambda })
    }

    /// `M1 = M3' M3`.
    pub fn from_factor(m3: &DMatrix<f64>, m2: DVector<f64>, lambda: f64) -> Result<Self> {
        Self::new(m3.transpose() * m3, m2, lambda)
    }

    pub fn m1(&self) -> &DMatrix<f64> {
        &self.m1
    }

    pub fn m2(&self) -> &DVector<f64> {
        &self.m2
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn input_dim(&self) -> usize {
        self.m2.len()
    }

    pub fn phi_value(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let n = u.norm();
        -self.lambda * n * n * n + u.dot(&(&self.m1 * u)) + self.m2.dot(u) + y.norm_squared()
    }

    /// The cubic term contributes `-3 lambda ||u|| u`, which is 0 at `u = 0`.
    pub fn phi_grad_u(&self, u: &DVector<f64>, _y: &DVector<f64>) -> DVector<f64> {
        let mut g = &self.m1 * u + self.m1.tr_mul(u) + &self.m2;
        if self.lambda > 0.0 {
            g.axpy(-3.0 * self.lambda * u.norm(), u, 1.0);
        }
        g
    }

    pub fn phi_grad_y(&self, _u: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        y * 2.0
    }

    pub fn to_spec(&self) -> ObjectiveSpec {
        ObjectiveSpec::Literal {
            m1: to_rows(&self.m1),
            m2: self.m2.iter().copied().collect(),
            lambda: self.lambda,
        }
    }
}

impl Objective for CubicQuadraticObjective {
    fn value(&self, u: &DVector<f64>, y: &DVector<f64>) -> f64 {
        self.phi_value(u, y)
    }
    fn grad_u(&self, u: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.phi_grad_u(u, y)
    }
    fn grad_y(&self, u: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        self.phi_grad_y(u, y)
    }
}

/// Reduced objective `Phi(u, h(u, d))`. Simulation-side only.
pub fn reduced_value<O: Objective + ?Sized>(
    obj: &O,
    plant: &LinearSinePlant,
    u: &DVector<f64>,
) -> Result<f64> {
    let y = plant.steady_state(u)?;
    Ok(obj.value(u, &y))
}

/// Exact gradient of the reduced objective via the chain rule with the true sensitivity.
pub fn reduced_grad<O: Objective + ?Sized>(
    obj: &O,
    plant: &LinearSinePlant,
    u: &DVector<f64>,
) -> Result<DVector<f64>> {
    let y = plant.steady_state(u)?;
    let h = plant.true_sensitivity(u)?;
    Ok(obj.grad_u(u, &y) + h.tr_mul(&obj.grad_y(u, &y)))
}

/// `M1 = scale * M3' M3 + shift * I`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Curvature {
    pub scale: f64,
    pub shift: f64,
}

impl Default for Curvature {
    fn default() -> Self {
        Self {
            scale: 1.0,
            shift: 0.0,
        }
    }
}

/// Draws `M3` and `m2` with standard-normal entries.
pub fn random_objective(
    rng: &mut RngStream,
    p: usize,
    lambda: f64,
    curvature: Curvature,
) -> Result<CubicQuadraticObjective> {
    let m3 = DMatrix::from_fn(p, p, |_, _| rng.standard_normal());
    let m2 = rng.normal_vector(p);
    let m1 = m3.tr_mul(&m3) * curvature.scale + DMatrix::identity(p, p) * curvature.shift;
    CubicQuadraticObjective::new(m1, m2, lambda)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectiveSpec {
    Random {
        seed: Option<u64>,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        curvature: Curvature,
    },
    Literal {
        m1: Vec<Vec<f64>>,
        m2: Vec<f64>,
        lambda: f64,
    },
}

fn default_lambda() -> f64 {
    BENCHMARK_LAMBDA
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec::Random {
            seed: None,
            lambda: BENCHMARK_LAMBDA,
            curvature: Curvature::default(),
        }
    }
}

impl ObjectiveSpec {
    pub fn build(&self, master_seed: u64, p: usize) -> Result<CubicQuadraticObjective> {
        match self {
            ObjectiveSpec::Random {
                seed,
                lambda,
                curvature,
            } => {
                let mut rng = RngStream::new(seed.unwrap_or(master_seed), 1);
                random_objective(&mut rng, p, *lambda, *curvature)
            }
            ObjectiveSpec::Literal { m1, m2, lambda } => {
                let obj = CubicQuadraticObjective::new(
                    from_rows("M1", m1)?,
                    DVector::from_column_slice(m2),
                    *lambda,
                )?;
                check_dim("objective input dimension", p, obj.input_dim())?;
                Ok(obj)
            }
        }
    }
}

/// Disturbance pair `(d_x, d_y)` active during one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Disturbance {
    pub d_x: DVector<f64>,
    pub d_y: DVector<f64>,
}

/// Piecewise-constant objective and disturbance sequence.
///
/// Everything active at step `k` is a pure function of `(seed, k / period)`,
/// so any epoch can be regenerated without replaying the ones before it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TimeVaryingObjectiveSchedule {
    pub seed: u64,
    pub period: usize,
    pub p: usize,
    pub r_x: usize,
    pub r_y: usize,
    pub lambda: f64,
    pub curvature: Curvature,
    /// Disturbances are drawn uniformly from `[-range, range]` per component.
    pub disturbance_range: f64,
}

impl Default for TimeVaryingObjectiveSchedule {
    fn default() -> Self {
        Self {
            seed: 0,
            period: BENCHMARK_PERIOD,
            p: 10,
            r_x: 5,
            r_y: 5,
            lambda: 0.0,
            curvature: Curvature::default(),
            disturbance_range: 1.0,
        }
    }
}

impl TimeVaryingObjectiveSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.period == 0 {
            return Err(Error::Config("regeneration period must be at least one step".into()));
        }
        if self.p == 0 {
            return Err(Error::Config("input dimension must be positive".into()));
        }
        if !(self.disturbance_range >= 0.0) {
            return Err(Error::Config("disturbance range must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn epoch(&self, k: usize) -> usize {
        k / self.period
    }

    pub fn objective_for_epoch(&self, epoch: usize) -> Result<(CubicQuadraticObjective, Disturbance)> {
        self.validate()?;
        let mut rng = RngStream::derive(self.seed, &[SCHEDULE_STREAM_TAG, epoch as u64]);
        let obj = random_objective(&mut rng, self.p, self.lambda, self.curvature)?;
        let r = self.disturbance_range;
        let d_x = DVector::from_fn(self.r_x, |_, _| rng.uniform(-r, r));
        let d_y = DVector::from_fn(self.r_y, |_, _| rng.uniform(-r, r));
        Ok((obj, Disturbance { d_x, d_y }))
    }

    pub fn objective_at_step(&self, k: usize) -> Result<(CubicQuadraticObjective, Disturbance)> {
        self.validate()?;
        self.objective_for_epoch(self.epoch(k))
    }
}
