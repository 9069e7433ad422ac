//! Optimal steady-state inputs of a (fixed) problem instance.
//!
//! Projected gradient descent on the reduced objective with exact
//! sensitivities, Barzilai-Borwein steps safeguarded by backtracking, and
//! several starts because the reduced objective need not be convex.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::controller::BoxConstraint;
use crate::error::{Error, Result};
use crate::metrics::Comparator;
use crate::objective::{reduced_grad, reduced_value, Objective};
use crate::plant::LinearSinePlant;
use crate::stochastics::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComparatorOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub starts: usize,
}

impl Default for ComparatorOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50_000,
            starts: 5,
        }
    }
}

impl ComparatorOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || self.starts == 0 {
            return Err(Error::Config(
                "comparator options need positive tolerance, iteration budget and start count".into(),
            ));
        }
        Ok(())
    }
}

/// `||u - proj(u - grad obj(u))||`.
pub fn stationarity_residual<O: Objective + ?Sized>(
    objective: &O,
    plant: &LinearSinePlant,
    constraint: &BoxConstraint,
    u: &DVector<f64>,
) -> Result<f64> {
    let g = reduced_grad(objective, plant, u)?;
    Ok((u - constraint.project(&(u - g))).norm())
}

struct Descent {
    u: DVector<f64>,
    value: f64,
    residual: f64,
    converged: bool,
}

fn descend<O: Objective + ?Sized>(
    objective: &O,
    plant: &LinearSinePlant,
    constraint: &BoxConstraint,
    start: DVector<f64>,
    opts: &ComparatorOptions,
) -> Result<Descent> {
    let mut u = constraint.project(&start);
    let mut f = reduced_value(objective, plant, &u)?;
    let mut g = reduced_grad(objective, plant, &u)?;
    let mut step = 1.0;
    let mut residual = (&u - constraint.project(&(&u - &g))).norm();
    for _ in 0..opts.max_iter {
        if residual <= opts.tol {
            return Ok(Descent { u, value: f, residual, converged: true });
        }
        // Backtrack until the quadratic upper model holds.
        let (u_next, f_next) = loop {
            let cand = constraint.project(&(&u - &g * step));
            let d = &cand - &u;
            let f_cand = reduced_value(objective, plant, &cand)?;
            if f_cand <= f + g.dot(&d) + d.norm_squared() / (2.0 * step) || step < 1e-300 {
                break (cand, f_cand);
            }
            step *= 0.5;
        };
        let g_next = reduced_grad(objective, plant, &u_next)?;
        let s = &u_next - &u;
        let y = &g_next - &g;
        let sy = s.dot(&y);
        step = if sy > 0.0 { (s.norm_squared() / sy).clamp(1e-12, 1e12) } else { (step * 2.0).min(1e12) };
        u = u_next;
        f = f_next;
        g = g_next;
        residual = (&u - constraint.project(&(&u - &g))).norm();
    }
    Ok(Descent {
        converged: residual <= opts.tol,
        u,
        value: f,
        residual,
    })
}

/// Best stationary point over `opts.starts` starts: the projection of the
/// origin, then uniform draws from the box (standard normal where unbounded).
pub fn solve_comparator<O: Objective + ?Sized>(
    objective: &O,
    plant: &LinearSinePlant,
    constraint: &BoxConstraint,
    opts: &ComparatorOptions,
    rng: &mut RngStream,
) -> Result<Comparator> {
    opts.validate()?;
    let p = constraint.dim();
    let mut best: Option<Descent> = None;
    for s in 0..opts.starts {
        let start = if s == 0 {
            DVector::zeros(p)
        } else {
            DVector::from_fn(p, |i, _| {
                let (l, h) = (constraint.lower()[i], constraint.upper()[i]);
                if l.is_finite() && h.is_finite() {
                    rng.uniform(l, h)
                } else {
                    rng.standard_normal()
                }
            })
        };
        let run = descend(objective, plant, constraint, start, opts)?;
        let better = match &best {
            None => true,
            Some(b) => (run.converged && !b.converged) || (run.converged == b.converged && run.value < b.value),
        };
        if better {
            best = Some(run);
        }
    }
    let best = best.expect("at least one start");
    Ok(Comparator {
        u_star: best.u,
        value: best.value,
        residual: best.residual,
        converged: best.converged,
    })
}
