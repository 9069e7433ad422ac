//! Closed-loop simulation of controller variants against a plant.
//!
//! Plants answer with their steady state. The exact-gradient oracle used for
//! the logged measures stays on the simulation side; controllers only ever
//! see measurements, partial gradients of the objective and `H_hat_k`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::controller::{BoxConstraint, Controller};
use crate::error::{Error, Result};
use crate::metrics::{Comparator, ComparatorSequence, StepRecord, TrajectoryLog};
use crate::objective::{reduced_grad, reduced_value, CubicQuadraticObjective, Objective, TimeVaryingObjectiveSchedule};
use crate::plant::{LinearSinePlant, PlantSnapshot};
use crate::sensitivity::{spectral_norm, SensitivityProvider};
use crate::stochastics::{label_tag, RngStream};

use super::comparator::{solve_comparator, ComparatorOptions};
use super::config::{ControllerSpec, ExperimentConfig, Scenario};

const CONTROLLER_STREAM_TAG: u64 = 0x6374_726c;
const COMPARATOR_STREAM_TAG: u64 = 0x636d_7072;
/// Inputs beyond this norm count as divergence; keeps the linear algebra away from overflow.
pub const DIVERGENCE_NORM: f64 = 1e100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep `w_k` and `u_k` in every log row.
    pub record_iterates: bool,
}

/// Unconstrained problem with a fixed objective.
#[derive(Clone, Debug)]
pub struct StaticProblem {
    pub plant: LinearSinePlant,
    pub objective: CubicQuadraticObjective,
    /// Nominal model the sensitivity providers perturb.
    pub reference: DMatrix<f64>,
}

impl StaticProblem {
    pub fn new(plant: LinearSinePlant, objective: CubicQuadraticObjective) -> Result<Self> {
        crate::error::check_dim("objective input dimension", plant.dims().p, objective.input_dim())?;
        Ok(Self {
            reference: plant.linear_sensitivity().clone(),
            plant,
            objective,
        })
    }
}

/// One epoch of a time-varying problem.
#[derive(Clone, Debug)]
pub struct Epoch {
    pub objective: CubicQuadraticObjective,
    pub plant: LinearSinePlant,
    pub comparator: Comparator,
}

/// Box-constrained problem whose objective and disturbances change every epoch.
#[derive(Clone, Debug)]
pub struct TimeVaryingProblem {
    pub schedule: TimeVaryingObjectiveSchedule,
    pub constraint: BoxConstraint,
    pub epochs: Vec<Epoch>,
    pub comparators: ComparatorSequence,
    pub reference: DMatrix<f64>,
}

impl TimeVaryingProblem {
    /// Builds every epoch reached within `horizon` steps (including the state
    /// after the last step) and solves its comparator.
    pub fn new(
        plant: &LinearSinePlant,
        schedule: TimeVaryingObjectiveSchedule,
        constraint: BoxConstraint,
        horizon: usize,
        comparator: &ComparatorOptions,
    ) -> Result<Self> {
        schedule.validate()?;
        crate::error::check_dim("constraint", plant.dims().p, constraint.dim())?;
        let n_epochs = schedule.epoch(horizon) + 1;
        let epochs = (0..n_epochs)
            .into_par_iter()
            .map(|e| {
                let (objective, dist) = schedule.objective_for_epoch(e)?;
                let plant = plant.with_disturbances(dist.d_x, dist.d_y)?;
                let mut rng = RngStream::derive(schedule.seed, &[COMPARATOR_STREAM_TAG, e as u64]);
                let comparator = solve_comparator(&objective, &plant, &constraint, comparator, &mut rng)?;
                Ok(Epoch {
                    objective,
                    plant,
                    comparator,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let comparators = ComparatorSequence::new(schedule.period, epochs.iter().map(|e| e.comparator.clone()).collect())?;
        Ok(Self {
            schedule,
            constraint,
            epochs,
            comparators,
            reference: plant.linear_sensitivity().clone(),
        })
    }

    fn epoch_at(&self, k: usize) -> Result<&Epoch> {
        self.epochs.get(self.schedule.epoch(k)).ok_or(Error::MissingComparator(k))
    }
}

/// Outcome of one (controller, replicate) loop.
#[derive(Clone, Debug)]
pub struct ReplicateResult {
    pub controller: String,
    pub replicate: usize,
    pub log: TrajectoryLog,
    /// `w_T`, the candidate after the last step.
    pub final_w: DVector<f64>,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub scenario: Scenario,
    pub horizon: usize,
    pub runs: Vec<ReplicateResult>,
    pub comparators: Option<ComparatorSequence>,
}

impl RunResult {
    pub fn runs_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a ReplicateResult> + 'a {
        self.runs.iter().filter(move |r| r.controller == label)
    }
}

/// Exploration stream of one loop; distinct for every (seed, replicate, label).
pub fn controller_stream(seed: u64, replicate: usize, label: &str) -> RngStream {
    RngStream::derive(seed, &[CONTROLLER_STREAM_TAG, replicate as u64, label_tag(label)])
}

struct Loop {
    ctrl: Controller,
    provider: SensitivityProvider,
}

impl Loop {
    fn new(spec: &ControllerSpec, reference: &DMatrix<f64>, seed: u64, replicate: usize, w0: DVector<f64>) -> Result<Self> {
        let params = spec.params()?;
        let provider = spec.sensitivity.build(reference, seed)?;
        let ctrl = Controller::new(params, w0, controller_stream(seed, replicate, &spec.label))?;
        Ok(Self { ctrl, provider })
    }

    fn prime<O: Objective + ?Sized>(&mut self, plant: &LinearSinePlant, objective: &O) -> Result<()> {
        if self.ctrl.needs_priming() {
            let u = self.ctrl.pending_input().clone();
            let y = plant.steady_state(&u)?;
            self.provider.observe(&u, &y)?;
            self.ctrl.prime(&PlantSnapshot { u, y }, objective)?;
        }
        Ok(())
    }

    fn diverged(&self) -> bool {
        let bad = |v: &DVector<f64>| !(v.norm() <= DIVERGENCE_NORM);
        bad(self.ctrl.pending_input()) || bad(self.ctrl.w())
    }

    /// Measures the pending input and returns the snapshot, `H_hat_k` and the
    /// log row fields that depend on them; `None` once the loop has diverged.
    fn measure<O: Objective + ?Sized>(
        &mut self,
        k: usize,
        plant: &LinearSinePlant,
        objective: &O,
        epoch: usize,
        record_iterates: bool,
    ) -> Result<Option<(PlantSnapshot, DMatrix<f64>, StepRecord)>> {
        if self.diverged() {
            return Ok(None);
        }
        let u = self.ctrl.pending_input().clone();
        let y = plant.steady_state(&u)?;
        self.provider.observe(&u, &y)?;
        let h_true = plant.true_sensitivity(&u)?;
        let h_hat = self.provider.get_sensitivity(k, &h_true);
        let h_err = &h_true - &h_hat;
        let grad_y = objective.grad_y(&u, &y);
        let w = self.ctrl.w();
        let row = StepRecord {
            k,
            alpha: self.ctrl.current_alpha(),
            eps_h: spectral_norm(&h_err),
            phi: objective.value(&u, &y),
            grad_norm_sq: reduced_grad(objective, plant, w)?.norm_squared(),
            eps_sq: h_err.tr_mul(&grad_y).norm_squared(),
            grad_y_sq: grad_y.norm_squared(),
            epoch,
            obj_w: reduced_value(objective, plant, w)?,
            tracking_err: None,
            w: record_iterates.then(|| w.clone()),
            u: record_iterates.then(|| u.clone()),
        };
        if !y.iter().all(|v| v.is_finite()) || !row.is_finite() || !h_hat.iter().all(|v| v.is_finite()) {
            return Ok(None);
        }
        Ok(Some((PlantSnapshot { u, y }, h_hat, row)))
    }
}

pub fn run_static_replicate(
    problem: &StaticProblem,
    spec: &ControllerSpec,
    seed: u64,
    replicate: usize,
    horizon: usize,
    opts: RunOptions,
) -> Result<ReplicateResult> {
    let start = Instant::now();
    let p = problem.plant.dims().p;
    let mut lp = Loop::new(spec, &problem.reference, seed, replicate, DVector::zeros(p))?;
    lp.prime(&problem.plant, &problem.objective)?;
    let mut log = TrajectoryLog::with_capacity(horizon);
    for k in 0..horizon {
        match lp.measure(k, &problem.plant, &problem.objective, 0, opts.record_iterates)? {
            Some((snap, h_hat, row)) => {
                log.push(row)?;
                lp.ctrl.step_static(&snap, &problem.objective, &h_hat)?;
            }
            None => log.push(StepRecord::diverged(k, lp.ctrl.params().effective_alpha(k), 0, false))?,
        }
    }
    Ok(ReplicateResult {
        controller: spec.label.clone(),
        replicate,
        log,
        final_w: lp.ctrl.w().clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn run_tv_replicate(
    problem: &TimeVaryingProblem,
    spec: &ControllerSpec,
    seed: u64,
    replicate: usize,
    horizon: usize,
    opts: RunOptions,
) -> Result<ReplicateResult> {
    let start = Instant::now();
    let constraint = &problem.constraint;
    let w0 = constraint.project(&DVector::zeros(constraint.dim()));
    let mut lp = Loop::new(spec, &problem.reference, seed, replicate, w0)?;
    let first = problem.epoch_at(0)?;
    lp.prime(&first.plant, &first.objective)?;
    let mut log = TrajectoryLog::with_capacity(horizon);
    for k in 0..horizon {
        let e = problem.schedule.epoch(k);
        let epoch = problem.epoch_at(k)?;
        match lp.measure(k, &epoch.plant, &epoch.objective, e, opts.record_iterates)? {
            Some((snap, h_hat, mut row)) => {
                row.tracking_err = Some((lp.ctrl.w() - &epoch.comparator.u_star).norm());
                log.push(row)?;
                lp.ctrl.step_running(&snap, &epoch.objective, &h_hat, constraint)?;
            }
            None => log.push(StepRecord::diverged(k, lp.ctrl.params().effective_alpha(k), e, true))?,
        }
    }
    Ok(ReplicateResult {
        controller: spec.label.clone(),
        replicate,
        log,
        final_w: lp.ctrl.w().clone(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

fn jobs(controllers: &[ControllerSpec], replicates: usize) -> Vec<(&ControllerSpec, usize)> {
    controllers
        .iter()
        .flat_map(|c| (0..replicates).map(move |r| (c, r)))
        .collect()
}

/// All (controller, replicate) loops, in parallel; results in controller-major order.
pub fn run_static(
    problem: &StaticProblem,
    controllers: &[ControllerSpec],
    seed: u64,
    replicates: usize,
    horizon: usize,
    opts: RunOptions,
) -> Result<Vec<ReplicateResult>> {
    jobs(controllers, replicates)
        .into_par_iter()
        .map(|(c, r)| run_static_replicate(problem, c, seed, r, horizon, opts))
        .collect()
}

pub fn run_tv(
    problem: &TimeVaryingProblem,
    controllers: &[ControllerSpec],
    seed: u64,
    replicates: usize,
    horizon: usize,
    opts: RunOptions,
) -> Result<Vec<ReplicateResult>> {
    jobs(controllers, replicates)
        .into_par_iter()
        .map(|(c, r)| run_tv_replicate(problem, c, seed, r, horizon, opts))
        .collect()
}

pub fn build_static_problem(config: &ExperimentConfig) -> Result<StaticProblem> {
    let plant = config.plant.build(config.seed)?;
    let objective = config.objective.build(config.seed, plant.dims().p)?;
    StaticProblem::new(plant, objective)
}

pub fn build_tv_problem(config: &ExperimentConfig) -> Result<TimeVaryingProblem> {
    let plant = config.plant.build(config.seed)?;
    let schedule = config.schedule.build(config.seed, &plant)?;
    let constraint = config.constraint.build(config.seed, plant.dims().p)?;
    TimeVaryingProblem::new(&plant, schedule, constraint, config.horizon, &config.comparator)
}

pub fn run_static_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    if config.scenario != Scenario::Static {
        return Err(Error::Config("expected a static scenario".into()));
    }
    config.validate()?;
    let problem = build_static_problem(config)?;
    let runs = run_static(&problem, &config.controllers, config.seed, config.replicates, config.horizon, RunOptions::default())?;
    Ok(RunResult {
        scenario: Scenario::Static,
        horizon: config.horizon,
        runs,
        comparators: None,
    })
}

pub fn run_tv_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    if config.scenario != Scenario::TimeVarying {
        return Err(Error::Config("expected a time-varying scenario".into()));
    }
    config.validate()?;
    let problem = build_tv_problem(config)?;
    let runs = run_tv(&problem, &config.controllers, config.seed, config.replicates, config.horizon, RunOptions::default())?;
    Ok(RunResult {
        scenario: Scenario::TimeVarying,
        horizon: config.horizon,
        runs,
        comparators: Some(problem.comparators),
    })
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult> {
    match config.scenario {
        Scenario::Static => run_static_experiment(config),
        Scenario::TimeVarying => run_tv_experiment(config),
    }
}
