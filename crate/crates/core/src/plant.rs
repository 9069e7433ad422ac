//! Simulated plants.
//!
//! [`LinearSinePlant`] is the discrete-time system
//!
//! ```text
//! x+ = A x + B1 u + B2 sin(u) + E d_x
//! y  = C x + D d_y
//! ```
//!
//! with `sin` applied elementwise. For `rho(A) < 1` it has the closed-form
//! steady-state map `y = C (I - A)^-1 (B1 u + B2 sin(u) + E d_x) + D d_y`,
//! which the controllers never see directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::stochastics::RngStream;

/// Spectral radius every benchmark plant is rescaled to.
pub const BENCHMARK_SPECTRAL_RADIUS: f64 = 0.05;

const MAX_RESAMPLES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantDims {
    /// state
    pub n: usize,
    /// input
    pub p: usize,
    /// output
    pub q: usize,
    /// state disturbance
    pub r_x: usize,
    /// output disturbance
    pub r_y: usize,
}

impl Default for PlantDims {
    fn default() -> Self {
        Self {
            n: 20,
            p: 10,
            q: 5,
            r_x: 5,
            r_y: 5,
        }
    }
}

/// An input together with the output the plant produced for it.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantSnapshot {
    pub u: DVector<f64>,
    pub y: DVector<f64>,
}

#[derive(Clone, Debug)]
pub struct LinearSinePlant {
    a: DMatrix<f64>,
    b1: DMatrix<f64>,
    b2: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    e: DMatrix<f64>,
    d_x: DVector<f64>,
    d_y: DVector<f64>,
    dims: PlantDims,
    spectral_radius: f64,
    // C (I - A)^-1 and the products the steady-state map needs
    state_gain: DMatrix<f64>,
    linear_gain: DMatrix<f64>,
    sine_gain: DMatrix<f64>,
    offset: DVector<f64>,
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

impl LinearSinePlant {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: DMatrix<f64>,
        b1: DMatrix<f64>,
        b2: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        e: DMatrix<f64>,
        d_x: DVector<f64>,
        d_y: DVector<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        check_dim("A columns", n, a.ncols())?;
        let p = b1.ncols();
        check_dim("B1 rows", n, b1.nrows())?;
        check_dim("B2 rows", n, b2.nrows())?;
        check_dim("B2 columns", p, b2.ncols())?;
        let q = c.nrows();
        check_dim("C columns", n, c.ncols())?;
        check_dim("D rows", q, d.nrows())?;
        check_dim("E rows", n, e.nrows())?;
        let dims = PlantDims {
            n,
            p,
            q,
            r_x: e.ncols(),
            r_y: d.ncols(),
        };
        check_dim("d_x", dims.r_x, d_x.len())?;
        check_dim("d_y", dims.r_y, d_y.len())?;

        let spectral_radius = spectral_radius(&a);
        if !(spectral_radius < 1.0) {
            return Err(Error::Config(format!(
                "state matrix must be Schur stable, spectral radius is {spectral_radius}"
            )));
        }
        // C (I - A)^-1 = ((I - A)^-T C^T)^T
        let lu = (DMatrix::identity(n, n) - &a).transpose().lu();
        let state_gain = lu
            .solve(&c.transpose())
            .ok_or_else(|| Error::Config("I - A is singular".into()))?
            .transpose();
        let linear_gain = &state_gain * &b1;
        let sine_gain = &state_gain * &b2;
        let offset = &state_gain * (&e * &d_x) + &d * &d_y;
        Ok(Self {
            a,
            b1,
            b2,
            c,
            d,
            e,
            d_x,
            d_y,
            dims,
            spectral_radius,
            state_gain,
            linear_gain,
            sine_gain,
            offset,
        })
    }

    /// Same system matrices, new disturbances.
    pub fn with_disturbances(&self, d_x: DVector<f64>, d_y: DVector<f64>) -> Result<Self> {
        check_dim("d_x", self.dims.r_x, d_x.len())?;
        check_dim("d_y", self.dims.r_y, d_y.len())?;
        let offset = &self.state_gain * (&self.e * &d_x) + &self.d * &d_y;
        Ok(Self {
            d_x,
            d_y,
            offset,
            ..self.clone()
        })
    }

    /// The plant with its sine channel removed (`B2 = 0`), i.e. a linear plant.
    pub fn linear_part(&self) -> Self {
        let b2 = DMatrix::zeros(self.dims.n, self.dims.p);
        Self {
            sine_gain: DMatrix::zeros(self.dims.q, self.dims.p),
            b2,
            ..self.clone()
        }
    }

    pub fn dims(&self) -> PlantDims {
        self.dims
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b1(&self) -> &DMatrix<f64> {
        &self.b1
    }
    pub fn b2(&self) -> &DMatrix<f64> {
        &self.b2
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }
    pub fn d_x(&self) -> &DVector<f64> {
        &self.d_x
    }
    pub fn d_y(&self) -> &DVector<f64> {
        &self.d_y
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    /// `C (I - A)^-1 B1`, the sensitivity of the linear channel alone.
    pub fn linear_sensitivity(&self) -> &DMatrix<f64> {
        &self.linear_gain
    }

    /// Output offset `C (I - A)^-1 E d_x + D d_y` at zero input.
    pub fn output_offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn steady_state(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("input", self.dims.p, u.len())?;
        let s = u.map(f64::sin);
        Ok(&self.linear_gain * u + &self.sine_gain * s + &self.offset)
    }

    /// One step of the dynamics; returns `(x_next, y)` with `y = C x + D d_y`
    /// read out at the current state.
    pub fn dynamics_step(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        check_dim("state", self.dims.n, x.len())?;
        check_dim("input", self.dims.p, u.len())?;
        let x_next =
            &self.a * x + &self.b1 * u + &self.b2 * u.map(f64::sin) + &self.e * &self.d_x;
        let y = &self.c * x + &self.d * &self.d_y;
        Ok((x_next, y))
    }

    /// Equilibrium state for a constant input.
    pub fn equilibrium_state(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("input", self.dims.p, u.len())?;
        let forcing = &self.b1 * u + &self.b2 * u.map(f64::sin) + &self.e * &self.d_x;
        (DMatrix::identity(self.dims.n, self.dims.n) - &self.a)
            .lu()
            .solve(&forcing)
            .ok_or_else(|| Error::Config("I - A is singular".into()))
    }

    /// Jacobian of [`steady_state`](Self::steady_state):
    /// `C (I - A)^-1 (B1 + B2 diag(cos u))`.
    pub fn true_sensitivity(&self, u: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim("input", self.dims.p, u.len())?;
        let mut h = self.linear_gain.clone();
        for (j, uj) in u.iter().enumerate() {
            let cj = uj.cos();
            h.column_mut(j).axpy(cj, &self.sine_gain.column(j), 1.0);
        }
        Ok(h)
    }

    pub fn to_spec(&self) -> PlantSpec {
        PlantSpec::Literal {
            a: to_rows(&self.a),
            b1: to_rows(&self.b1),
            b2: to_rows(&self.b2),
            c: to_rows(&self.c),
            d: to_rows(&self.d),
            e: to_rows(&self.e),
            d_x: self.d_x.iter().copied().collect(),
            d_y: self.d_y.iter().copied().collect(),
        }
    }
}

/// Recipe for a randomly drawn benchmark plant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkRecipe {
    pub dims: PlantDims,
    pub spectral_radius: f64,
    /// Standard deviation of the (isotropic) disturbance distribution.
    pub disturbance_std: f64,
    /// Multiplies `C`; shrinks the input-output gain.
    pub output_scale: f64,
    /// When false, `B2 = 0`.
    pub nonlinear: bool,
}

impl Default for BenchmarkRecipe {
    fn default() -> Self {
        Self {
            dims: PlantDims::default(),
            spectral_radius: BENCHMARK_SPECTRAL_RADIUS,
            disturbance_std: 1.0,
            output_scale: 1.0,
            nonlinear: true,
        }
    }
}

fn normal_matrix(rng: &mut RngStream, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

/// Benchmark plant with standard-normal matrices and `A` rescaled to `rho(A) = 0.05`.
pub fn make_benchmark_plant(seed: u64, dims: PlantDims) -> Result<LinearSinePlant> {
    let recipe = BenchmarkRecipe {
        dims,
        ..BenchmarkRecipe::default()
    };
    make_plant_from_recipe(&mut RngStream::new(seed, 0), &recipe)
}

pub fn make_plant_from_recipe(
    rng: &mut RngStream,
    recipe: &BenchmarkRecipe,
) -> Result<LinearSinePlant> {
    let PlantDims { n, p, q, r_x, r_y } = recipe.dims;
    if n == 0 || p == 0 || q == 0 {
        return Err(Error::Config(format!("plant dimensions must be positive: {:?}", recipe.dims)));
    }
    if !(recipe.spectral_radius >= 0.0 && recipe.spectral_radius < 1.0) {
        return Err(Error::Config(format!(
            "target spectral radius must lie in [0, 1), got {}",
            recipe.spectral_radius
        )));
    }
    let mut a = None;
    for _ in 0..MAX_RESAMPLES {
        let raw = normal_matrix(rng, n, n);
        let rho = spectral_radius(&raw);
        if rho > f64::MIN_POSITIVE {
            a = Some(raw * (recipe.spectral_radius / rho));
            break;
        }
    }
    let a = a.ok_or_else(|| Error::Config("could not draw a nondegenerate state matrix".into()))?;
    let b1 = normal_matrix(rng, n, p);
    let b2 = normal_matrix(rng, n, p);
    let c = normal_matrix(rng, q, n) * recipe.output_scale;
    let d = normal_matrix(rng, q, r_y);
    let e = normal_matrix(rng, n, r_x);
    let d_x = rng.normal_vector(r_x) * recipe.disturbance_std;
    let d_y = rng.normal_vector(r_y) * recipe.disturbance_std;
    let b2 = if recipe.nonlinear { b2 } else { DMatrix::zeros(n, p) };
    LinearSinePlant::new(a, b1, b2, c, d, e, d_x, d_y)
}

/// Plant description as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlantSpec {
    /// Drawn from a seed; `seed` defaults to the experiment's master seed.
    Random {
        seed: Option<u64>,
        #[serde(flatten)]
        recipe: BenchmarkRecipe,
    },
    /// Row-major matrix literals.
    Literal {
        a: Vec<Vec<f64>>,
        b1: Vec<Vec<f64>>,
        b2: Vec<Vec<f64>>,
        c: Vec<Vec<f64>>,
        d: Vec<Vec<f64>>,
        e: Vec<Vec<f64>>,
        d_x: Vec<f64>,
        d_y: Vec<f64>,
    },
}

impl Default for PlantSpec {
    fn default() -> Self {
        PlantSpec::Random {
            seed: None,
            recipe: BenchmarkRecipe::default(),
        }
    }
}

impl PlantSpec {
    pub fn build(&self, master_seed: u64) -> Result<LinearSinePlant> {
        match self {
            PlantSpec::Random { seed, recipe } => {
                let mut rng = RngStream::new(seed.unwrap_or(master_seed), 0);
                make_plant_from_recipe(&mut rng, recipe)
            }
            PlantSpec::Literal {
                a,
                b1,
                b2,
                c,
                d,
                e,
                d_x,
                d_y,
            } => LinearSinePlant::new(
                from_rows("A", a)?,
                from_rows("B1", b1)?,
                from_rows("B2", b2)?,
                from_rows("C", c)?,
                from_rows("D", d)?,
                from_rows("E", e)?,
                DVector::from_column_slice(d_x),
                DVector::from_column_slice(d_y),
            ),
        }
    }
}

pub(crate) fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_rows(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("matrix {name} has ragged rows")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
