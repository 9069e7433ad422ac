//! Strongly convex instance on which the tracking bound can be evaluated
//! with exactly computed constants.
//!
//! The plant is linear (`B2 = 0`) and the objective has no cubic term, so the
//! reduced objective of every epoch is the quadratic
//! `f(u) = u' Q u / 2 + b' u + c` with `Q = 2 (M1 + H'H)`, `b = m2 + 2 H' c0`
//! and `c = ||c0||^2`, where `y = H u + c0` is the steady-state map.

use nalgebra::{DMatrix, DVector};

use crate::controller::{theoretical_params_tv, AlphaSchedule, BoxConstraint, Mode};
use crate::error::{Error, Result};
use crate::metrics::{gamma_k, tracking_bound, BoundConstants};
use crate::objective::{CubicQuadraticObjective, Curvature, TimeVaryingObjectiveSchedule};
use crate::plant::{make_plant_from_recipe, BenchmarkRecipe, LinearSinePlant, PlantDims};
use crate::sensitivity::{spectral_norm, PerturbationScale, SensitivitySpec};
use crate::stochastics::RngStream;

use super::comparator::ComparatorOptions;
use super::config::ControllerSpec;
use super::runner::{run_tv_replicate, RunOptions, StaticProblem, TimeVaryingProblem};

pub const VERIFICATION_DIMS: PlantDims = PlantDims {
    n: 4,
    p: 2,
    q: 2,
    r_x: 2,
    r_y: 2,
};
pub const VERIFICATION_PERIOD: usize = 1_000;
pub const VERIFICATION_TAU: f64 = 0.5;
const VERIFICATION_CURVATURE: Curvature = Curvature { scale: 0.25, shift: 4.0 };

/// `f(u) = u' Q u / 2 + b' u + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedQuadratic {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl ReducedQuadratic {
    pub fn new(objective: &CubicQuadraticObjective, plant: &LinearSinePlant) -> Result<Self> {
        if objective.lambda() != 0.0 || plant.b2().amax() != 0.0 {
            return Err(Error::Config(
                "the reduced objective is quadratic only for a linear plant and no cubic term".into(),
            ));
        }
        let h = plant.linear_sensitivity();
        let c0 = plant.output_offset();
        let m1 = objective.m1();
        Ok(Self {
            q: (m1 + m1.transpose() + h.tr_mul(h) * 2.0),
            b: objective.m2() + h.tr_mul(c0) * 2.0,
            c: c0.norm_squared(),
        })
    }

    pub fn value(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.q * u)) + self.b.dot(u) + self.c
    }

    pub fn grad(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.q * u + &self.b
    }

    /// `(mu, L)`: extreme eigenvalues of `Q`.
    pub fn curvature_range(&self) -> (f64, f64) {
        let eig = self.q.clone().symmetric_eigenvalues();
        (eig.min(), eig.max())
    }

    /// Unconstrained minimizer.
    pub fn minimizer(&self) -> Result<DVector<f64>> {
        self.q
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&(-&self.b)))
            .ok_or_else(|| Error::Config("reduced Hessian is not positive definite".into()))
    }
}

pub fn verification_plant(seed: u64) -> Result<LinearSinePlant> {
    let recipe = BenchmarkRecipe {
        dims: VERIFICATION_DIMS,
        output_scale: 0.25,
        nonlinear: false,
        ..BenchmarkRecipe::default()
    };
    make_plant_from_recipe(&mut RngStream::new(seed, 0), &recipe)
}

pub fn verification_schedule(seed: u64) -> TimeVaryingObjectiveSchedule {
    TimeVaryingObjectiveSchedule {
        seed,
        period: VERIFICATION_PERIOD,
        p: VERIFICATION_DIMS.p,
        r_x: VERIFICATION_DIMS.r_x,
        r_y: VERIFICATION_DIMS.r_y,
        lambda: 0.0,
        curvature: VERIFICATION_CURVATURE,
        disturbance_range: 1.0,
    }
}

pub fn verification_box() -> BoxConstraint {
    let p = VERIFICATION_DIMS.p;
    BoxConstraint::new(DVector::from_element(p, -1.0), DVector::from_element(p, 1.0))
        .and_then(|b| b.with_inflation(VERIFICATION_TAU))
        .expect("valid verification box")
}

/// First epoch of the instance as an unconstrained static problem.
pub fn verification_static_problem(seed: u64) -> Result<StaticProblem> {
    let plant = verification_plant(seed)?;
    let (objective, dist) = verification_schedule(seed).objective_for_epoch(0)?;
    StaticProblem::new(plant.with_disturbances(dist.d_x, dist.d_y)?, objective)
}

/// Time-varying problem with every epoch reached by step `horizon`.
pub fn verification_problem(seed: u64, horizon: usize) -> Result<TimeVaryingProblem> {
    TimeVaryingProblem::new(
        &verification_plant(seed)?,
        verification_schedule(seed),
        verification_box(),
        horizon,
        &ComparatorOptions::default(),
    )
}

/// Constants of the epochs reached by step `horizon`, computed from the
/// quadratic forms. Bounds over the inflated box use `R = max ||u|| + tau`:
/// `||grad_y Phi|| = 2 ||H u + c0|| <= 2 (||c0|| + ||H|| R)`,
/// `|f(u)| <= ||Q|| R^2 / 2 + ||b|| R + |c|`, `||grad f(u)|| <= ||Q|| R + ||b||`.
pub fn analytic_constants(problem: &TimeVaryingProblem, horizon: usize) -> Result<BoundConstants> {
    let last = problem.schedule.epoch(horizon);
    let constraint = &problem.constraint;
    let r = constraint.max_norm() + constraint.inflation();
    let mut k = BoundConstants {
        mu: f64::INFINITY,
        d: constraint.diameter(),
        tau: constraint.inflation(),
        ..BoundConstants::default()
    };
    for epoch in &problem.epochs[..=last] {
        let quad = ReducedQuadratic::new(&epoch.objective, &epoch.plant)?;
        let (mu, l) = quad.curvature_range();
        let q_norm = spectral_norm(&quad.q);
        let h_norm = spectral_norm(epoch.plant.linear_sensitivity());
        k.mu = k.mu.min(mu);
        k.l = k.l.max(l);
        k.m_phi = k.m_phi.max(2.0 * (epoch.plant.output_offset().norm() + h_norm * r));
        k.g = k.g.max(0.5 * q_norm * r * r + quad.b.norm() * r + quad.c.abs());
        k.m = k.m.max(q_norm * r + quad.b.norm());
    }
    k.sigma = problem.epochs[..=last]
        .windows(2)
        .map(|w| (&w[1].comparator.u_star - &w[0].comparator.u_star).norm())
        .fold(0.0, f64::max);
    k.validate()?;
    Ok(k)
}

/// Gray-box controller of the bound check, tuned for horizon `t`.
pub fn verification_controller(t: usize) -> Result<ControllerSpec> {
    let (eta, delta) = theoretical_params_tv(VERIFICATION_DIMS.p, t, VERIFICATION_TAU)?;
    Ok(ControllerSpec {
        label: "gray-box".into(),
        mode: Mode::GrayBox,
        eta,
        delta,
        schedule: Some(AlphaSchedule::TvBounded { c: 1.0 }),
        sensitivity: SensitivitySpec::FixedPerturbed {
            bound: 0.3,
            scale: PerturbationScale::Elementwise,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundCheck {
    pub horizon: usize,
    pub realized: f64,
    pub bound: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.realized <= self.bound
    }
}

/// Runs one loop for `horizon` steps and compares `||w_T - u_T*||` with the bound.
pub fn check_tracking_bound(seed: u64, horizon: usize) -> Result<BoundCheck> {
    let problem = verification_problem(seed, horizon)?;
    let constants = analytic_constants(&problem, horizon)?;
    let spec = verification_controller(horizon)?;
    let run = run_tv_replicate(&problem, &spec, seed, 0, horizon, RunOptions::default())?;
    let gammas = run
        .log
        .rows()
        .iter()
        .map(|r| gamma_k(&constants, r.alpha, r.eps_h, spec.delta, VERIFICATION_DIMS.p))
        .collect::<Result<Vec<_>>>()?;
    let w0 = problem.constraint.project(&DVector::zeros(VERIFICATION_DIMS.p));
    let initial = (&w0 - &problem.comparators.at_step(0)?.u_star).norm();
    let bound = tracking_bound(&constants, spec.eta, initial, &gammas)?;
    let realized = (&run.final_w - &problem.comparators.at_step(horizon)?.u_star).norm();
    Ok(BoundCheck {
        horizon,
        realized,
        bound,
    })
}
