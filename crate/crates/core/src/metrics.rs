//! Per-step trajectory records and the measures derived from them.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controller::AlphaSchedule;
use crate::error::{Error, Result};

/// One controller step. Everything except the iterates is always recorded.
#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub alpha: f64,
    /// `||H_hat_k - H(u_k)||` (spectral norm).
    pub eps_h: f64,
    /// `Phi(u_k, y_k)` as seen by the controller.
    pub phi: f64,
    /// `||grad obj(w_k)||^2` from the exact oracle.
    pub grad_norm_sq: f64,
    /// `||(H(u_k) - H_hat_k)' grad_y Phi(u_k, y_k)||^2`.
    pub eps_sq: f64,
    /// `||grad_y Phi(u_k, y_k)||^2`.
    pub grad_y_sq: f64,
    pub epoch: usize,
    /// `obj_k(w_k)`.
    pub obj_w: f64,
    /// `||w_k - u_k*||` when a comparator is known.
    pub tracking_err: Option<f64>,
    pub w: Option<DVector<f64>>,
    pub u: Option<DVector<f64>>,
}

impl StepRecord {
    /// Row for a step after the loop left the finite numbers; measures are
    /// infinite and sensitivity-error terms undefined.
    pub fn diverged(k: usize, alpha: f64, epoch: usize, tracked: bool) -> Self {
        Self {
            k,
            alpha,
            eps_h: f64::NAN,
            phi: f64::NAN,
            grad_norm_sq: f64::INFINITY,
            eps_sq: f64::NAN,
            grad_y_sq: f64::NAN,
            epoch,
            obj_w: f64::INFINITY,
            tracking_err: tracked.then_some(f64::INFINITY),
            w: None,
            u: None,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grad_norm_sq.is_finite() && self.eps_sq.is_finite()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    rows: Vec<StepRecord>,
}

impl TrajectoryLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            rows: Vec::with_capacity(n),
        }
    }

    /// Appends the record for the next step; `row.k` must equal the current length.
    pub fn push(&mut self, row: StepRecord) -> Result<()> {
        if row.k != self.rows.len() {
            return Err(Error::Protocol(format!(
                "log expected step {}, got {}",
                self.rows.len(),
                row.k
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn rows(&self) -> &[StepRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn get(&self, k: usize) -> Option<&StepRecord> {
        self.rows.get(k)
    }

    pub fn last(&self) -> Option<&StepRecord> {
        self.rows.last()
    }

    /// First step whose record is not finite.
    pub fn diverged_at(&self) -> Option<usize> {
        self.rows.iter().find(|r| !r.is_finite()).map(|r| r.k)
    }
}

/// Constants of an instance entering the tracking bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    /// Smoothness of the reduced objective.
    pub l: f64,
    /// Lipschitz constant of the reduced objective.
    pub m: f64,
    /// Bound on `||grad_y Phi||`.
    pub m_phi: f64,
    /// Strong convexity modulus.
    pub mu: f64,
    /// Bound on `|obj|` over the inflated set.
    pub g: f64,
    pub d: f64,
    pub tau: f64,
    /// Largest step of the comparator sequence.
    pub sigma: f64,
}

impl BoundConstants {
    pub fn validate(&self) -> Result<()> {
        let all = [self.l, self.m, self.m_phi, self.mu, self.g, self.d, self.tau, self.sigma];
        if all.iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::Parameter("bound constants must be nonnegative".into()));
        }
        if self.mu > self.l {
            return Err(Error::Parameter(format!(
                "strong convexity modulus {} exceeds smoothness {}",
                self.mu, self.l
            )));
        }
        Ok(())
    }

    /// `max(|1 - eta mu|, |1 - eta L|)`.
    pub fn contraction(&self, eta: f64) -> f64 {
        (1.0 - eta * self.mu).abs().max((1.0 - eta * self.l).abs())
    }
}

/// Optimal input and value of one epoch's problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparator {
    pub u_star: DVector<f64>,
    pub value: f64,
    /// Projected-gradient fixed-point residual at `u_star`.
    pub residual: f64,
    pub converged: bool,
}

/// Comparators for a piecewise-constant problem, one per epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparatorSequence {
    period: usize,
    epochs: Vec<Comparator>,
}

impl ComparatorSequence {
    pub fn new(period: usize, epochs: Vec<Comparator>) -> Result<Self> {
        if period == 0 {
            return Err(Error::Parameter("comparator period must be positive".into()));
        }
        Ok(Self { period, epochs })
    }

    /// A single comparator valid for every step.
    pub fn constant(c: Comparator) -> Self {
        Self {
            period: usize::MAX,
            epochs: vec![c],
        }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn epochs(&self) -> &[Comparator] {
        &self.epochs
    }

    pub fn at_step(&self, k: usize) -> Result<&Comparator> {
        self.epochs.get(k / self.period).ok_or(Error::MissingComparator(k))
    }

    /// Path length of the per-step sequence `u_0*, ..., u_T*`.
    pub fn path_length(&self, t: usize) -> Result<f64> {
        let last = self.at_step(t)?;
        let upto = t / self.period;
        let points: Vec<&DVector<f64>> = self.epochs[..upto].iter().map(|c| &c.u_star).collect();
        let mut total = path_length(points.iter().copied());
        if let Some(prev) = points.last() {
            total += (&last.u_star - *prev).norm();
        }
        Ok(total)
    }

    /// Largest change between consecutive comparators.
    pub fn max_step(&self) -> f64 {
        self.epochs
            .windows(2)
            .map(|w| (&w[1].u_star - &w[0].u_star).norm())
            .fold(0.0, f64::max)
    }
}

/// `(1/T) sum ||grad obj(w_k)||^2`.
pub fn avg_sq_grad_norm(log: &TrajectoryLog) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(log.rows.iter().map(|r| r.grad_norm_sq).sum::<f64>() / log.len() as f64)
}

/// Mean of `||grad obj(w_k)||^2` over the last `fraction` of the steps.
pub fn tail_mean_grad_norm_sq(log: &TrajectoryLog, fraction: f64) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let n = ((log.len() as f64 * fraction).ceil() as usize).clamp(1, log.len());
    let tail = &log.rows[log.len() - n..];
    Ok(tail.iter().map(|r| r.grad_norm_sq).sum::<f64>() / n as f64)
}

/// Cumulative dynamic regret after each step: `sum_{j<=k} obj_j(w_j) - obj_j(u_j*)`.
pub fn regret_series(log: &TrajectoryLog, comparators: &ComparatorSequence) -> Result<Vec<f64>> {
    let mut total = 0.0;
    log.rows
        .iter()
        .map(|r| {
            total += r.obj_w - comparators.at_step(r.k)?.value;
            Ok(total)
        })
        .collect()
}

pub fn dynamic_regret(log: &TrajectoryLog, comparators: &ComparatorSequence) -> Result<f64> {
    Ok(regret_series(log, comparators)?.last().copied().unwrap_or(0.0))
}

/// `sum ||x_k - x_{k-1}||`.
pub fn path_length<'a, I>(points: I) -> f64
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let mut prev: Option<&DVector<f64>> = None;
    let mut total = 0.0;
    for p in points {
        if let Some(q) = prev {
            total += (p - q).norm();
        }
        prev = Some(p);
    }
    total
}

/// `||w_k - u_k*||`. Requires the log to hold iterates.
pub fn tracking_error(log: &TrajectoryLog, comparators: &ComparatorSequence, k: usize) -> Result<f64> {
    let row = log.get(k).ok_or(Error::MissingLogValue { k, what: "step" })?;
    let w = row.w.as_ref().ok_or(Error::MissingLogValue { k, what: "w" })?;
    Ok((w - &comparators.at_step(k)?.u_star).norm())
}

/// Expected distance between the descent direction and the true gradient:
/// `alpha M_Phi eps_H + (1 - alpha) 2 p G / delta + L delta (alpha + (1 - alpha) p / 2)`.
pub fn gamma_k(c: &BoundConstants, alpha: f64, eps_h: f64, delta: f64, p: usize) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("smoothing parameter must be positive, got {delta}")));
    }
    let p = p as f64;
    Ok(alpha * c.m_phi * eps_h
        + (1.0 - alpha) * 2.0 * p * c.g / delta
        + c.l * delta * (alpha + (1.0 - alpha) * p / 2.0))
}

/// `rho^T ||w_0 - u_0*|| + eta sum_k rho^(T-1-k) gamma_k + sigma / (1 - rho)`
/// with `T = gammas.len()`.
pub fn tracking_bound(c: &BoundConstants, eta: f64, initial_distance: f64, gammas: &[f64]) -> Result<f64> {
    let rho = c.contraction(eta);
    if !(rho < 1.0) {
        return Err(Error::Parameter(format!(
            "contraction factor {rho} is not below one; the step size must lie in (0, 2/L)"
        )));
    }
    let t = gammas.len();
    // Horner form of the discounted sum avoids large powers.
    let discounted = gammas.iter().fold(0.0, |acc, g| acc * rho + g);
    Ok(rho.powi(t as i32) * initial_distance + eta * discounted + c.sigma / (1.0 - rho))
}

/// `sum alpha_k ||eps_k||^2` over the finite rows.
pub fn scaled_cumulative_error(log: &TrajectoryLog) -> f64 {
    log.rows.iter().filter(|r| r.is_finite()).map(|r| r.alpha * r.eps_sq).sum()
}

/// `sum alpha_k eps_H,k^2 ||grad_y Phi_k||^2`, the step-wise envelope of
/// [`scaled_cumulative_error`].
pub fn scaled_cumulative_envelope(log: &TrajectoryLog) -> f64 {
    log.rows
        .iter()
        .filter(|r| r.is_finite())
        .map(|r| r.alpha * r.eps_h * r.eps_h * r.grad_y_sq)
        .sum()
}

/// Steps where `||eps_k||^2 > eps_H,k^2 ||grad_y Phi_k||^2` beyond rounding.
pub fn envelope_violations(log: &TrajectoryLog) -> Vec<usize> {
    log.rows
        .iter()
        .filter(|r| r.is_finite())
        .filter(|r| {
            let env = r.eps_h * r.eps_h * r.grad_y_sq;
            r.eps_sq > env * (1.0 + 1e-9) + 1e-300
        })
        .map(|r| r.k)
        .collect()
}

/// `sum_{k<T} alpha_k`.
pub fn alpha_sum(schedule: &AlphaSchedule, t: usize) -> f64 {
    (0..t).map(|k| schedule.alpha_at(k)).sum()
}

/// `1 + 3 C (T^(1/3) - 1)`.
pub fn alpha_sum_envelope(c: f64, t: usize) -> f64 {
    1.0 + 3.0 * c * ((t as f64).cbrt() - 1.0)
}
