//! Property and oracle suites run by the `check` subcommand.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::controller::{AlphaSchedule, Controller, ControllerParams};
use crate::error::Result;
use crate::metrics::{alpha_sum, alpha_sum_envelope, envelope_violations, scaled_cumulative_envelope, scaled_cumulative_error};
use crate::objective::{reduced_grad, reduced_value, CubicQuadraticObjective, ObjectiveSpec};
use crate::plant::{make_benchmark_plant, LinearSinePlant, PlantDims, PlantSnapshot};
use crate::sensitivity::{perturb, PerturbationScale};
use crate::stochastics::{finite_diff_gradient, smooth_approx_value, sphere_gradient_estimate, RngStream};

use super::config::{ExperimentConfig, STATIC_ETA};
use super::runner::run_static_experiment;
use super::verification::verification_static_problem;

/// Seed of the benchmark instance the suites run on.
pub const CHECK_SEED: u64 = 2024;

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub details: Vec<String>,
    pub seconds: f64,
}

struct Recorder {
    passed: bool,
    details: Vec<String>,
}

impl Recorder {
    fn new() -> Self {
        Self {
            passed: true,
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: String) {
        if !ok {
            self.passed = false;
        }
        self.details.push(format!("[{}] {what}", if ok { "ok" } else { "FAIL" }));
    }
}

fn suite(id: u8, name: &'static str, body: impl FnOnce(&mut Recorder) -> Result<()>) -> SuiteReport {
    let start = Instant::now();
    let mut rec = Recorder::new();
    if let Err(e) = body(&mut rec) {
        rec.check(false, format!("error: {e}"));
    }
    SuiteReport {
        id,
        name,
        passed: rec.passed,
        details: rec.details,
        seconds: start.elapsed().as_secs_f64(),
    }
}

fn benchmark_instance() -> Result<(LinearSinePlant, CubicQuadraticObjective)> {
    let plant = make_benchmark_plant(CHECK_SEED, PlantDims::default())?;
    let objective = ObjectiveSpec::default().build(CHECK_SEED, plant.dims().p)?;
    Ok((plant, objective))
}

/// Closed loop of one controller against the steady-state map; returns `w_0 .. w_T`.
fn closed_loop(
    ctrl: &mut Controller,
    plant: &LinearSinePlant,
    objective: &CubicQuadraticObjective,
    h_hat: &DMatrix<f64>,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    if ctrl.needs_priming() {
        let u = ctrl.pending_input().clone();
        let y = plant.steady_state(&u)?;
        ctrl.prime(&PlantSnapshot { u, y }, objective)?;
    }
    let mut ws = vec![ctrl.w().clone()];
    for _ in 0..steps {
        let u = ctrl.pending_input().clone();
        let y = plant.steady_state(&u)?;
        ctrl.step_static(&PlantSnapshot { u, y }, objective, h_hat)?;
        ws.push(ctrl.w().clone());
    }
    Ok(ws)
}

fn bitwise_equal(a: &[DVector<f64>], b: &[DVector<f64>]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(s, t)| s.to_bits() == t.to_bits())
        })
}

/// Plain inexact-gradient descent written out from the objective's closed form.
fn reference_descent(
    plant: &LinearSinePlant,
    objective: &CubicQuadraticObjective,
    h_hat: &DMatrix<f64>,
    eta: f64,
    steps: usize,
) -> Result<Vec<DVector<f64>>> {
    let m1 = objective.m1();
    let lambda = objective.lambda();
    let mut w = DVector::zeros(plant.dims().p);
    let mut ws = vec![w.clone()];
    for _ in 0..steps {
        let y = plant.steady_state(&w)?;
        let mut direction = objective.m2().clone();
        direction += m1 * &w + m1.transpose() * &w;
        direction -= &w * (3.0 * lambda * w.norm());
        direction += h_hat.transpose() * (&y * 2.0);
        w -= direction * eta;
        ws.push(w.clone());
    }
    Ok(ws)
}

/// Gray-box degenerations: model-based with `alpha = 1, delta = 0` and model-free with `alpha = 0`.
pub fn degeneration_suite() -> SuiteReport {
    suite(1, "degeneration equivalence", |rec| {
        let (plant, objective) = benchmark_instance()?;
        let h_hat = perturb(plant.linear_sensitivity(), 0.1, PerturbationScale::MaxElement, &mut RngStream::new(CHECK_SEED, 2))?;
        let steps = 1000;

        let params = ControllerParams::gray_box(STATIC_ETA, 0.0, AlphaSchedule::Fixed { alpha: 1.0 });
        let mut gb = Controller::new(params, DVector::zeros(10), RngStream::new(CHECK_SEED, 10))?;
        let got = closed_loop(&mut gb, &plant, &objective, &h_hat, steps)?;
        let want = reference_descent(&plant, &objective, &h_hat, STATIC_ETA, steps)?;
        let worst = got
            .iter()
            .zip(&want)
            .map(|(a, b)| (a - b).norm() / b.norm().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max);
        rec.check(worst <= 1e-12, format!("alpha = 1, delta = 0 vs reference descent: max relative deviation {worst:e} over {steps} steps"));

        let delta = 1e-3;
        let small = verification_static_problem(CHECK_SEED)?;
        let small_h = small.plant.linear_sensitivity().clone();
        for (name, plant, objective, h_hat) in [
            ("benchmark", &plant, &objective, &h_hat),
            ("verification instance", &small.plant, &small.objective, &small_h),
        ] {
            let p = plant.dims().p;
            let gb0 = ControllerParams::gray_box(2e-4, delta, AlphaSchedule::Fixed { alpha: 0.0 });
            let mf = ControllerParams::model_free(2e-4, delta);
            let mut a = Controller::new(gb0, DVector::zeros(p), RngStream::new(CHECK_SEED, 11))?;
            let mut b = Controller::new(mf, DVector::zeros(p), RngStream::new(CHECK_SEED, 11))?;
            let wa = closed_loop(&mut a, plant, objective, h_hat, steps)?;
            let wb = closed_loop(&mut b, plant, objective, h_hat, steps)?;
            let same = bitwise_equal(&wa, &wb);
            let finite = wa.iter().take_while(|w| w.iter().all(|x| x.is_finite())).count();
            rec.check(
                same,
                format!("alpha = 0 vs model-free on the {name}: bitwise equal = {same} ({finite} finite iterates)"),
            );
        }
        Ok(())
    })
}

/// Analytic derivatives against central differences at random points.
pub fn oracle_suite() -> SuiteReport {
    suite(2, "oracle agreement", |rec| {
        let (plant, objective) = benchmark_instance()?;
        let p = plant.dims().p;
        let mut rng = RngStream::new(CHECK_SEED, 20);
        let h = 1e-5;
        let tol = 1e-6;
        let (mut sens, mut gu, mut gy, mut red) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        let points = 25;
        for _ in 0..points {
            let u = rng.normal_vector(p);
            let y = plant.steady_state(&u)?;

            let analytic = plant.true_sensitivity(&u)?;
            for i in 0..plant.dims().q {
                let fd = finite_diff_gradient(|v| plant.steady_state(v).map(|y| y[i]).unwrap_or(f64::NAN), &u, h)?;
                sens = sens.max((analytic.row(i).transpose() - fd).amax());
            }
            let fd_u = finite_diff_gradient(|v| objective.phi_value(v, &y), &u, h)?;
            gu = gu.max((objective.phi_grad_u(&u, &y) - fd_u).amax());
            let fd_y = finite_diff_gradient(|v| objective.phi_value(&u, v), &y, h)?;
            gy = gy.max((objective.phi_grad_y(&u, &y) - fd_y).amax());
            let fd_r = finite_diff_gradient(|v| reduced_value(&objective, &plant, v).unwrap_or(f64::NAN), &u, h)?;
            red = red.max((reduced_grad(&objective, &plant, &u)? - fd_r).amax());
        }
        for (name, err) in [("true_sensitivity", sens), ("phi_grad_u", gu), ("phi_grad_y", gy), ("reduced_grad", red)] {
            rec.check(err <= tol, format!("{name}: max abs deviation {err:e} at {points} points"));
        }
        Ok(())
    })
}

/// Smoothing identities for `xi(w) = ||w||^2` (smoothness constant 2).
pub fn smoothing_suite() -> SuiteReport {
    suite(3, "smoothing identities", |rec| {
        let xi = |w: &DVector<f64>| w.norm_squared();
        let l = 2.0;
        let samples = 1_000_000;
        let mut rng = RngStream::new(CHECK_SEED, 30);
        for p in [2usize, 10] {
            for delta in [0.01, 0.1, 1.0] {
                let w = rng.normal_vector(p);
                let grad = &w * 2.0;
                let (mean, se) = sphere_gradient_estimate(xi, &w, delta, samples, &mut rng)?;
                let dev = &mean - &grad;
                let in_band = dev.iter().zip(se.iter()).all(|(d, s)| d.abs() <= 3.0 * s);
                rec.check(in_band, format!("p={p} delta={delta}: sphere estimate within 3 standard errors of 2w"));

                let smoothed = smooth_approx_value(xi, &w, delta, samples, &mut rng)?;
                let gap = (smoothed.mean - xi(&w)).abs();
                let allowed = l * delta * delta / 2.0;
                rec.check(
                    gap <= allowed + 3.0 * smoothed.std_error,
                    format!("p={p} delta={delta}: |xi_delta - xi| = {gap:e} vs L delta^2 / 2 = {allowed:e}"),
                );

                let grad_gap = dev.norm();
                let allowed = l * p as f64 * delta / 2.0;
                rec.check(
                    grad_gap <= allowed + 3.0 * se.norm(),
                    format!("p={p} delta={delta}: gradient gap {grad_gap:e} vs L p delta / 2 = {allowed:e}"),
                );
            }
        }
        Ok(())
    })
}

/// Cumulative-coefficient envelope and the per-step sensitivity-error envelope.
pub fn envelope_suite() -> SuiteReport {
    suite(4, "cumulative error envelope", |rec| {
        for c in [1.0, 100.0] {
            for t in [10usize, 1_000, 1_000_000] {
                let sum = alpha_sum(&AlphaSchedule::StaticBounded { c }, t);
                let env = alpha_sum_envelope(c, t);
                rec.check(sum <= env, format!("C={c} T={t}: sum alpha = {sum} <= {env}"));
            }
        }
        let mut cfg = ExperimentConfig::static_benchmark();
        cfg.seed = CHECK_SEED;
        cfg.horizon = 2_000;
        cfg.replicates = 2;
        let result = run_static_experiment(&cfg)?;
        for run in &result.runs {
            let bad = envelope_violations(&run.log);
            let total = scaled_cumulative_error(&run.log);
            let env = scaled_cumulative_envelope(&run.log);
            rec.check(
                bad.is_empty() && total <= env * (1.0 + 1e-9),
                format!(
                    "{} #{}: {} step violations, sum alpha ||eps||^2 = {total:e} <= {env:e}",
                    run.controller,
                    run.replicate,
                    bad.len()
                ),
            );
        }
        Ok(())
    })
}

pub fn run_suite(id: u8) -> Option<SuiteReport> {
    match id {
        1 => Some(degeneration_suite()),
        2 => Some(oracle_suite()),
        3 => Some(smoothing_suite()),
        4 => Some(envelope_suite()),
        _ => None,
    }
}

pub fn run_all() -> Vec<SuiteReport> {
    (1..=4).filter_map(run_suite).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_suites_pass() {
        for report in [degeneration_suite(), oracle_suite()] {
            assert!(report.passed, "{report:#?}");
        }
    }

    #[test]
    fn unknown_suite() {
        assert!(run_suite(9).is_none());
    }
}
