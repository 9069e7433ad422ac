//! Gray-box feedback optimization controllers.
//!
//! One [`Controller`] closes one loop. At every step it consumes the
//! measurement for the input it emitted last, blends a model-based inexact
//! gradient with a two-point zeroth-order estimate, and emits the next input
//! `u = w + delta v` around its candidate solution `w`:
//!
//! ```text
//! g1    = grad_u Phi(u_k, y_k) + H_hat_k' grad_y Phi(u_k, y_k)
//! g2    = (p / delta) (Phi(u_k, y_k) - Phi(u_{k-1}, y_{k-1})) v_k
//! w_k+1 = w_k - eta (alpha_k g1 + (1 - alpha_k) g2)      (projected when constrained)
//! u_k+1 = w_k+1 + delta v_k+1,   v_k+1 ~ U(sphere)
//! ```
//!
//! The two-point estimate needs a previous objective sample at `k = 0`, so an
//! exploring controller first asks for one priming measurement at
//! `w_0 + delta v_-1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::objective::Objective;
use crate::plant::PlantSnapshot;
use crate::stochastics::{sample_unit_sphere, RngStream};

/// Rule producing the combination coefficient `alpha_k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AlphaSchedule {
    Fixed { alpha: f64 },
    /// `min(C / (k+1)^(2/3), 1)`, for a bounded sensitivity error.
    StaticBounded { c: f64 },
    /// `min(C' / (k+1)^(2/3 - 2 theta), 1)`, for an error decaying as `(k+1)^-theta`.
    StaticDecay { c: f64, theta: f64 },
    /// `min(C / (k+1)^(1/4), 1)`.
    TvBounded { c: f64 },
    /// `min(C' / (k+1)^(1/4 - theta), 1)`.
    TvDecay { c: f64, theta: f64 },
}

impl AlphaSchedule {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Parameter(msg));
        match *self {
            AlphaSchedule::Fixed { alpha } if !(0.0..=1.0).contains(&alpha) => {
                bad(format!("fixed combination coefficient must lie in [0, 1], got {alpha}"))
            }
            AlphaSchedule::StaticBounded { c } | AlphaSchedule::TvBounded { c } if !(c > 0.0) => {
                bad(format!("schedule constant must be positive, got {c}"))
            }
            AlphaSchedule::StaticDecay { c, theta } => {
                if !(c > 0.0) || !(theta > 0.0 && theta < 1.0 / 3.0) {
                    bad(format!("static decay schedule needs C > 0 and theta in (0, 1/3), got {c}, {theta}"))
                } else {
                    Ok(())
                }
            }
            AlphaSchedule::TvDecay { c, theta } => {
                if !(c > 0.0) || !(theta > 0.0 && theta < 0.25) {
                    bad(format!("time-varying decay schedule needs C > 0 and theta in (0, 1/4), got {c}, {theta}"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn alpha_at(&self, k: usize) -> f64 {
        let t = (k + 1) as f64;
        let vanishing = |c: f64, exponent: f64| (c / t.powf(exponent)).min(1.0);
        match *self {
            AlphaSchedule::Fixed { alpha } => alpha,
            AlphaSchedule::StaticBounded { c } => vanishing(c, 2.0 / 3.0),
            AlphaSchedule::StaticDecay { c, theta } => vanishing(c, 2.0 / 3.0 - 2.0 * theta),
            AlphaSchedule::TvBounded { c } => vanishing(c, 0.25),
            AlphaSchedule::TvDecay { c, theta } => vanishing(c, 0.25 - theta),
        }
    }
}

pub fn alpha_at(schedule: &AlphaSchedule, k: usize) -> f64 {
    schedule.alpha_at(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    GrayBox,
    /// `alpha = 1`, no exploration.
    ModelBased,
    /// `alpha = 0`.
    ModelFree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    pub eta: f64,
    pub delta: f64,
    pub schedule: AlphaSchedule,
    pub mode: Mode,
}

impl ControllerParams {
    pub fn gray_box(eta: f64, delta: f64, schedule: AlphaSchedule) -> Self {
        Self {
            eta,
            delta,
            schedule,
            mode: Mode::GrayBox,
        }
    }

    pub fn model_based(eta: f64) -> Self {
        Self {
            eta,
            delta: 0.0,
            schedule: AlphaSchedule::Fixed { alpha: 1.0 },
            mode: Mode::ModelBased,
        }
    }

    pub fn model_free(eta: f64, delta: f64) -> Self {
        Self {
            eta,
            delta,
            schedule: AlphaSchedule::Fixed { alpha: 0.0 },
            mode: Mode::ModelFree,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::Parameter(format!("step size must be finite and nonnegative, got {}", self.eta)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Parameter(format!("smoothing parameter must be finite and nonnegative, got {}", self.delta)));
        }
        self.schedule.validate()?;
        if self.uses_estimate() && self.delta == 0.0 {
            return Err(Error::Parameter(
                "smoothing parameter must be positive when the zeroth-order estimate is in use".into(),
            ));
        }
        Ok(())
    }

    /// `alpha_k` after applying the mode.
    pub fn effective_alpha(&self, k: usize) -> f64 {
        match self.mode {
            Mode::GrayBox => self.schedule.alpha_at(k),
            Mode::ModelBased => 1.0,
            Mode::ModelFree => 0.0,
        }
    }

    /// Whether some step can put weight on the zeroth-order estimate.
    pub fn uses_estimate(&self) -> bool {
        match self.mode {
            Mode::ModelBased => false,
            Mode::ModelFree => true,
            Mode::GrayBox => self.schedule != AlphaSchedule::Fixed { alpha: 1.0 },
        }
    }

    fn explores(&self) -> bool {
        self.mode != Mode::ModelBased
    }
}

/// Box `lower <= u <= upper`, optionally deflated towards its center.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxConstraint {
    lower: DVector<f64>,
    upper: DVector<f64>,
    // bounds of the deflated set the candidate solution is projected onto
    inner_lower: DVector<f64>,
    inner_upper: DVector<f64>,
    deflation: f64,
    inflation: f64,
}

impl BoxConstraint {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("box lower bound exceeds upper bound".into()));
        }
        Ok(Self {
            inner_lower: lower.clone(),
            inner_upper: upper.clone(),
            lower,
            upper,
            deflation: 0.0,
            inflation: 1.0,
        })
    }

    /// Whole space, as a box with infinite bounds.
    pub fn unbounded(p: usize) -> Self {
        Self::new(
            DVector::from_element(p, f64::NEG_INFINITY),
            DVector::from_element(p, f64::INFINITY),
        )
        .expect("infinite bounds are ordered")
    }

    /// Candidate solutions are projected onto the box shrunk by `1 - kappa`
    /// about its center. Coordinates with an infinite bound are left alone.
    pub fn with_deflation(mut self, kappa: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&kappa) {
            return Err(Error::Parameter(format!("deflation must lie in [0, 1), got {kappa}")));
        }
        for i in 0..self.lower.len() {
            let (l, u) = (self.lower[i], self.upper[i]);
            if l.is_finite() && u.is_finite() {
                let center = 0.5 * (l + u);
                let half = 0.5 * (u - l) * (1.0 - kappa);
                // Clamped so rounding never puts the inner box outside the outer one.
                self.inner_lower[i] = (center - half).clamp(l, u);
                self.inner_upper[i] = (center + half).clamp(l, u);
            }
        }
        self.deflation = kappa;
        Ok(self)
    }

    /// Inflation radius `tau` of the set the exploration may reach.
    pub fn with_inflation(mut self, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::Parameter(format!("inflation margin must be positive, got {tau}")));
        }
        self.inflation = tau;
        Ok(self)
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }
    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }
    pub fn deflation(&self) -> f64 {
        self.deflation
    }
    pub fn inflation(&self) -> f64 {
        self.inflation
    }
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// `||upper - lower||`; infinite for unbounded boxes.
    pub fn diameter(&self) -> f64 {
        (&self.upper - &self.lower).norm()
    }

    /// Largest norm of a point in the box.
    pub fn max_norm(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest half-width over the coordinates.
    pub fn margin(&self) -> f64 {
        self.lower
            .iter()
            .zip(self.upper.iter())
            .map(|(l, u)| 0.5 * (u - l))
            .fold(f64::INFINITY, f64::min)
    }

    /// Projection onto the (deflated) feasible set for candidate solutions.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(u.len(), |i, _| u[i].clamp(self.inner_lower[i], self.inner_upper[i]))
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }

    pub fn contains_deflated(&self, u: &DVector<f64>, tol: f64) -> bool {
        u.iter()
            .zip(self.inner_lower.iter().zip(self.inner_upper.iter()))
            .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol)
    }
}

pub fn project_box(u: &DVector<f64>, constraint: &BoxConstraint) -> DVector<f64> {
    constraint.project(u)
}

/// `grad_u + H_hat' grad_y`.
pub fn inexact_gradient(
    grad_u: &DVector<f64>,
    grad_y: &DVector<f64>,
    h_hat: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    check_dim("sensitivity rows", grad_y.len(), h_hat.nrows())?;
    check_dim("sensitivity columns", grad_u.len(), h_hat.ncols())?;
    Ok(grad_u + h_hat.tr_mul(grad_y))
}

/// `(p / delta) (phi_now - phi_prev) v` with `p = v.len()`.
pub fn zeroth_order_estimate(
    phi_now: f64,
    phi_prev: f64,
    v: &DVector<f64>,
    delta: f64,
) -> Result<DVector<f64>> {
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("smoothing parameter must be positive, got {delta}")));
    }
    Ok(v * (v.len() as f64 / delta * (phi_now - phi_prev)))
}

/// `alpha g1 + (1 - alpha) g2`.
pub fn combine(alpha: f64, g1: &DVector<f64>, g2: &DVector<f64>) -> Result<DVector<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("combination coefficient must lie in [0, 1], got {alpha}")));
    }
    check_dim("combined directions", g1.len(), g2.len())?;
    Ok(g1 * alpha + g2 * (1.0 - alpha))
}

/// Step size and smoothing parameter for the static rate guarantee:
/// `eta = 1 / (224 L p^2 T^(1/3))`, `delta = sqrt(2) M / (112 L T^(1/3))`.
pub fn theoretical_params_static(l: f64, m: f64, p: usize, t: usize) -> Result<(f64, f64)> {
    if !(l > 0.0 && m > 0.0) || p == 0 || t == 0 {
        return Err(Error::Parameter("theoretical parameters need positive L, M, p and T".into()));
    }
    let t13 = (t as f64).cbrt();
    let p = p as f64;
    Ok((1.0 / (224.0 * l * p * p * t13), 2f64.sqrt() * m / (112.0 * l * t13)))
}

/// Step size and smoothing parameter for the dynamic-regret guarantee:
/// `eta = 1 / (p^(2/3) T^(3/4))`, `delta = min(p^(1/3) / T^(1/4), tau)`.
pub fn theoretical_params_tv(p: usize, t: usize, tau: f64) -> Result<(f64, f64)> {
    if p == 0 || t == 0 || !(tau > 0.0) {
        return Err(Error::Parameter("theoretical parameters need positive p, T and tau".into()));
    }
    let (p, t) = (p as f64, t as f64);
    Ok((1.0 / (p.powf(2.0 / 3.0) * t.powf(0.75)), (p.cbrt() / t.powf(0.25)).min(tau)))
}

/// Per-loop controller memory.
#[derive(Clone, Debug, PartialEq)]
pub struct ControllerState {
    pub w: DVector<f64>,
    /// Input emitted last and awaiting its measurement.
    pub u: DVector<f64>,
    /// Exploration direction of `u`; `None` when the controller does not explore.
    pub v: Option<DVector<f64>>,
    pub phi_prev: Option<f64>,
    pub k: usize,
    pub rng: RngStream,
}

#[derive(Clone, Debug)]
pub struct Controller {
    params: ControllerParams,
    state: ControllerState,
    primed: bool,
}

impl Controller {
    /// New loop at candidate `w0`. Call [`pending_input`](Self::pending_input)
    /// for the first actuation; if [`needs_priming`](Self::needs_priming) that
    /// actuation must be answered through [`prime`](Self::prime).
    pub fn new(params: ControllerParams, w0: DVector<f64>, mut rng: RngStream) -> Result<Self> {
        params.validate()?;
        let p = w0.len();
        let (u, v) = if params.explores() {
            let v = sample_unit_sphere(&mut rng, p)?;
            (&w0 + &v * params.delta, Some(v))
        } else {
            (w0.clone(), None)
        };
        Ok(Self {
            primed: !params.uses_estimate(),
            params,
            state: ControllerState {
                w: w0,
                u,
                v,
                phi_prev: None,
                k: 0,
                rng,
            },
        })
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn w(&self) -> &DVector<f64> {
        &self.state.w
    }

    pub fn k(&self) -> usize {
        self.state.k
    }

    pub fn pending_input(&self) -> &DVector<f64> {
        &self.state.u
    }

    pub fn needs_priming(&self) -> bool {
        !self.primed
    }

    /// `alpha` the next step will use.
    pub fn current_alpha(&self) -> f64 {
        self.params.effective_alpha(self.state.k)
    }

    fn check_handshake(&self, measurement: &PlantSnapshot) -> Result<()> {
        // Bitwise, so a non-finite emitted input still matches its own measurement.
        let same = measurement.u.len() == self.state.u.len()
            && measurement.u.iter().zip(self.state.u.iter()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(Error::Protocol(format!(
                "measurement at step {} does not belong to the emitted input",
                self.state.k
            )));
        }
        Ok(())
    }

    /// Stores `Phi(u_-1, y_-1)` and emits `u_0`.
    pub fn prime<O: Objective + ?Sized>(
        &mut self,
        measurement: &PlantSnapshot,
        objective: &O,
    ) -> Result<DVector<f64>> {
        if self.primed {
            return Err(Error::Protocol("controller is already primed".into()));
        }
        self.check_handshake(measurement)?;
        self.state.phi_prev = Some(objective.value(&measurement.u, &measurement.y));
        let v = sample_unit_sphere(&mut self.state.rng, self.state.w.len())?;
        self.state.u = &self.state.w + &v * self.params.delta;
        self.state.v = Some(v);
        self.primed = true;
        Ok(self.state.u.clone())
    }

    /// One unconstrained update; returns the next input.
    pub fn step_static<O: Objective + ?Sized>(
        &mut self,
        measurement: &PlantSnapshot,
        objective: &O,
        h_hat: &DMatrix<f64>,
    ) -> Result<DVector<f64>> {
        self.advance(measurement, objective, h_hat, None)
    }

    /// One update projected onto `constraint`, using the objective of the
    /// current time step; returns the next input.
    pub fn step_running<O: Objective + ?Sized>(
        &mut self,
        measurement: &PlantSnapshot,
        objective_k: &O,
        h_hat: &DMatrix<f64>,
        constraint: &BoxConstraint,
    ) -> Result<DVector<f64>> {
        check_dim("constraint", self.state.w.len(), constraint.dim())?;
        if self.params.explores() && self.params.delta >= constraint.inflation() {
            return Err(Error::Parameter(format!(
                "smoothing parameter {} must be below the inflation margin {}",
                self.params.delta,
                constraint.inflation()
            )));
        }
        self.advance(measurement, objective_k, h_hat, Some(constraint))
    }

    fn advance<O: Objective + ?Sized>(
        &mut self,
        measurement: &PlantSnapshot,
        objective: &O,
        h_hat: &DMatrix<f64>,
        constraint: Option<&BoxConstraint>,
    ) -> Result<DVector<f64>> {
        if !self.primed {
            return Err(Error::Protocol("controller must be primed before stepping".into()));
        }
        self.check_handshake(measurement)?;
        let (u, y) = (&measurement.u, &measurement.y);
        let alpha = self.current_alpha();
        let phi_now = objective.value(u, y);

        let model_based = || inexact_gradient(&objective.grad_u(u, y), &objective.grad_y(u, y), h_hat);
        let estimate = || -> Result<DVector<f64>> {
            let v = self.state.v.as_ref().ok_or_else(|| Error::Protocol("missing exploration direction".into()))?;
            let phi_prev = self.state.phi_prev.ok_or_else(|| Error::Protocol("missing previous sample".into()))?;
            zeroth_order_estimate(phi_now, phi_prev, v, self.params.delta)
        };
        let direction = if alpha == 1.0 {
            model_based()?
        } else if alpha == 0.0 {
            estimate()?
        } else {
            combine(alpha, &model_based()?, &estimate()?)?
        };

        let mut w_next = &self.state.w - direction * self.params.eta;
        if let Some(c) = constraint {
            w_next = c.project(&w_next);
        }
        self.state.w = w_next;
        if self.params.explores() {
            let v = sample_unit_sphere(&mut self.state.rng, self.state.w.len())?;
            self.state.u = &self.state.w + &v * self.params.delta;
            self.state.v = Some(v);
        } else {
            self.state.u = self.state.w.clone();
        }
        self.state.phi_prev = Some(phi_now);
        self.state.k += 1;
        Ok(self.state.u.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::CubicQuadraticObjective;

    #[test]
    fn schedule_values() {
        let s = AlphaSchedule::StaticBounded { c: 100.0 };
        assert_eq!(s.alpha_at(0), 1.0);
        assert!((s.alpha_at(7999) - 0.25).abs() < 1e-12);
        let tv = AlphaSchedule::TvBounded { c: 1.0 };
        assert!((tv.alpha_at(255) - 0.25).abs() < 1e-15);
        assert_eq!(AlphaSchedule::Fixed { alpha: 0.3 }.alpha_at(10), 0.3);
        let sd = AlphaSchedule::StaticDecay { c: 1.0, theta: 0.25 };
        assert!((sd.alpha_at(63) - 64f64.powf(-(2.0 / 3.0 - 0.5))).abs() < 1e-15);
        let td = AlphaSchedule::TvDecay { c: 1.0, theta: 0.125 };
        assert!((td.alpha_at(255) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn schedule_validation() {
        assert!(AlphaSchedule::Fixed { alpha: 1.5 }.validate().is_err());
        assert!(AlphaSchedule::StaticBounded { c: 0.0 }.validate().is_err());
        assert!(AlphaSchedule::StaticDecay { c: 1.0, theta: 0.4 }.validate().is_err());
        assert!(AlphaSchedule::TvDecay { c: 1.0, theta: 0.25 }.validate().is_err());
        assert!(AlphaSchedule::TvDecay { c: 1.0, theta: 0.2 }.validate().is_ok());
    }

    #[test]
    fn inexact_gradient_reduces_to_grad_u_without_output_term() {
        let gu = DVector::from_vec(vec![1.0, 2.0]);
        let gy = DVector::zeros(3);
        let h = DMatrix::from_element(3, 2, 7.0);
        assert_eq!(inexact_gradient(&gu, &gy, &h).unwrap(), gu);
        assert!(inexact_gradient(&gu, &DVector::zeros(2), &h).is_err());
    }

    #[test]
    fn zeroth_order_estimate_arithmetic() {
        let v = DVector::from_vec(vec![1.0, 0.0]);
        let g = zeroth_order_estimate(1.05, 1.0, &v, 0.1).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12 && g[1] == 0.0);
        assert_eq!(zeroth_order_estimate(3.0, 3.0, &v, 0.1).unwrap(), DVector::zeros(2));
        assert!(zeroth_order_estimate(1.0, 0.0, &v, 0.0).is_err());
    }

    #[test]
    fn combine_arithmetic() {
        let g1 = DVector::from_vec(vec![4.0, 0.0]);
        let g2 = DVector::from_vec(vec![0.0, 8.0]);
        assert_eq!(combine(1.0, &g1, &g2).unwrap(), g1);
        assert_eq!(combine(0.0, &g1, &g2).unwrap(), g2);
        assert_eq!(combine(0.25, &g1, &g2).unwrap(), DVector::from_vec(vec![1.0, 6.0]));
        assert!(combine(1.1, &g1, &g2).is_err());
        assert!(combine(-0.1, &g1, &g2).is_err());
    }

    #[test]
    fn theoretical_parameter_values() {
        let (eta, delta) = theoretical_params_static(1.0, 1.0, 1, 1).unwrap();
        assert!((eta - 1.0 / 224.0).abs() < 1e-15);
        assert!((delta - 2f64.sqrt() / 112.0).abs() < 1e-15);
        let (eta, delta) = theoretical_params_tv(1, 16, 10.0).unwrap();
        assert!((eta - 0.125).abs() < 1e-15);
        assert!((delta - 0.5).abs() < 1e-15);
        let (_, delta) = theoretical_params_tv(1, 16, 0.1).unwrap();
        assert_eq!(delta, 0.1);
        assert!(theoretical_params_static(0.0, 1.0, 1, 1).is_err());
    }

    #[test]
    fn projection_clamps_coordinates() {
        let b = BoxConstraint::new(DVector::from_vec(vec![-1.0, 0.0]), DVector::from_vec(vec![1.0, 2.0])).unwrap();
        let inside = DVector::from_vec(vec![0.5, 1.0]);
        assert_eq!(project_box(&inside, &b), inside);
        let out = DVector::from_vec(vec![0.5, 3.0]);
        assert_eq!(project_box(&out, &b), DVector::from_vec(vec![0.5, 2.0]));
        assert!(BoxConstraint::new(DVector::from_vec(vec![1.0]), DVector::from_vec(vec![0.0])).is_err());
    }

    #[test]
    fn deflated_box_shrinks_about_center() {
        let b = BoxConstraint::new(DVector::from_vec(vec![0.0, -2.0]), DVector::from_vec(vec![4.0, 2.0]))
            .unwrap()
            .with_deflation(0.5)
            .unwrap();
        let p = b.project(&DVector::from_vec(vec![10.0, -10.0]));
        assert_eq!(p, DVector::from_vec(vec![3.0, -1.0]));
        assert!(b.contains(&p, 0.0));
        assert_eq!(b.margin(), 2.0);
    }

    fn simple_objective() -> CubicQuadraticObjective {
        CubicQuadraticObjective::new(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, -1.0]), 0.0).unwrap()
    }

    #[test]
    fn stepping_before_priming_is_a_protocol_error() {
        let params = ControllerParams::model_free(0.1, 0.01);
        let mut ctrl = Controller::new(params, DVector::zeros(2), RngStream::new(0, 0)).unwrap();
        assert!(ctrl.needs_priming());
        let snap = PlantSnapshot {
            u: ctrl.pending_input().clone(),
            y: DVector::zeros(1),
        };
        let h = DMatrix::zeros(1, 2);
        assert!(matches!(
            ctrl.step_static(&snap, &simple_objective(), &h),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn mismatched_measurement_is_a_protocol_error() {
        let mut ctrl = Controller::new(ControllerParams::model_based(0.1), DVector::zeros(2), RngStream::new(0, 0)).unwrap();
        assert!(!ctrl.needs_priming());
        let snap = PlantSnapshot {
            u: DVector::from_vec(vec![1.0, 0.0]),
            y: DVector::zeros(1),
        };
        assert!(matches!(
            ctrl.step_static(&snap, &simple_objective(), &DMatrix::zeros(1, 2)),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn zero_step_size_freezes_the_candidate() {
        let params = ControllerParams::gray_box(0.0, 0.1, AlphaSchedule::StaticBounded { c: 1.0 });
        let w0 = DVector::from_vec(vec![0.3, -0.2]);
        let mut ctrl = Controller::new(params, w0.clone(), RngStream::new(4, 0)).unwrap();
        let obj = simple_objective();
        let h = DMatrix::zeros(1, 2);
        let mut u = ctrl.pending_input().clone();
        let snap = PlantSnapshot { u: u.clone(), y: DVector::zeros(1) };
        u = ctrl.prime(&snap, &obj).unwrap();
        for _ in 0..50 {
            let snap = PlantSnapshot { u: u.clone(), y: DVector::zeros(1) };
            u = ctrl.step_static(&snap, &obj, &h).unwrap();
            assert_eq!(ctrl.w(), &w0);
            assert!(((&u - &w0).norm() - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn estimate_modes_require_positive_delta() {
        assert!(Controller::new(ControllerParams::model_free(0.1, 0.0), DVector::zeros(2), RngStream::new(0, 0)).is_err());
        let p = ControllerParams::gray_box(0.1, 0.0, AlphaSchedule::Fixed { alpha: 1.0 });
        assert!(Controller::new(p, DVector::zeros(2), RngStream::new(0, 0)).is_ok());
    }

    #[test]
    fn running_step_rejects_delta_beyond_inflation() {
        let params = ControllerParams::model_free(0.1, 0.5);
        let mut ctrl = Controller::new(params, DVector::zeros(2), RngStream::new(0, 0)).unwrap();
        let obj = simple_objective();
        let snap = PlantSnapshot { u: ctrl.pending_input().clone(), y: DVector::zeros(1) };
        ctrl.prime(&snap, &obj).unwrap();
        let snap = PlantSnapshot { u: ctrl.pending_input().clone(), y: DVector::zeros(1) };
        let c = BoxConstraint::unbounded(2).with_inflation(0.1).unwrap();
        assert!(matches!(
            ctrl.step_running(&snap, &obj, &DMatrix::zeros(1, 2), &c),
            Err(Error::Parameter(_))
        ));
    }
}
