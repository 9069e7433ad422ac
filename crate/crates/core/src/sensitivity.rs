//! Approximate sensitivities handed to the controllers.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::stochastics::RngStream;

/// Inputs changes smaller than this carry no information for the estimator.
pub const RLS_EXCITATION_FLOOR: f64 = 1e-12;

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// How a fixed perturbation is scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationScale {
    /// `|dH_ij| <= bound * max |H|`.
    #[default]
    MaxElement,
    /// `|dH_ij| <= bound * |H_ij|`.
    Elementwise,
}

/// Reference matrix plus bounded uniform noise.
pub fn perturb(
    reference: &DMatrix<f64>,
    bound: f64,
    scale: PerturbationScale,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    if !(0.0..1.0).contains(&bound) {
        return Err(Error::Config(format!("relative noise bound must lie in [0, 1), got {bound}")));
    }
    let peak = reference.amax();
    Ok(reference.map(|h| {
        let r = rng.uniform(-1.0, 1.0);
        match scale {
            PerturbationScale::MaxElement => h + r * bound * peak,
            PerturbationScale::Elementwise => h * (1.0 + r * bound),
        }
    }))
}

/// Recursive least squares for `dy ~ H du` with exponential forgetting.
#[derive(Clone, Debug, PartialEq)]
pub struct RlsState {
    estimate: DMatrix<f64>,
    covariance: DMatrix<f64>,
    forgetting: f64,
}

impl RlsState {
    pub fn new(initial: DMatrix<f64>, initial_covariance: f64, forgetting: f64) -> Result<Self> {
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(Error::Config(format!("forgetting factor must lie in (0, 1], got {forgetting}")));
        }
        if !(initial_covariance > 0.0) {
            return Err(Error::Config("initial covariance scale must be positive".into()));
        }
        let p = initial.ncols();
        Ok(Self {
            estimate: initial,
            covariance: DMatrix::identity(p, p) * initial_covariance,
            forgetting,
        })
    }

    pub fn estimate(&self) -> &DMatrix<f64> {
        &self.estimate
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Rank-one update. Returns `false` and leaves the state untouched when `du`
    /// is below the excitation floor.
    pub fn update(&mut self, du: &DVector<f64>, dy: &DVector<f64>) -> Result<bool> {
        check_dim("RLS input delta", self.estimate.ncols(), du.len())?;
        check_dim("RLS output delta", self.estimate.nrows(), dy.len())?;
        if du.norm() <= RLS_EXCITATION_FLOOR {
            return Ok(false);
        }
        let p_du = &self.covariance * du;
        let gain = &p_du / (self.forgetting + du.dot(&p_du));
        let innovation = dy - &self.estimate * du;
        self.estimate += &innovation * gain.transpose();
        // P du is P' du since P is symmetric
        self.covariance -= &gain * p_du.transpose();
        self.covariance /= self.forgetting;
        let sym = (&self.covariance + self.covariance.transpose()) * 0.5;
        self.covariance = sym;
        Ok(true)
    }
}

/// Source of the approximate sensitivity `H_hat_k`.
#[derive(Clone, Debug)]
pub enum SensitivityProvider {
    /// `H_hat_k = H_k`.
    Exact,
    /// Time-invariant estimate.
    FixedPerturbed { estimate: DMatrix<f64> },
    /// `H_hat_k = H_k + r_k * e0 / (k+1)^theta * U` with `||U|| = 1`.
    PowerDecay {
        initial_error: f64,
        theta: f64,
        direction: DMatrix<f64>,
        tight: bool,
        rng: Box<RngStream>,
    },
    /// Online estimate updated from consecutive measurements.
    Learned {
        rls: RlsState,
        last: Option<(DVector<f64>, DVector<f64>)>,
    },
}

impl SensitivityProvider {
    pub fn fixed_perturbed(
        reference: &DMatrix<f64>,
        bound: f64,
        scale: PerturbationScale,
        rng: &mut RngStream,
    ) -> Result<Self> {
        Ok(Self::FixedPerturbed {
            estimate: perturb(reference, bound, scale, rng)?,
        })
    }

    pub fn power_decay(
        q: usize,
        p: usize,
        initial_error: f64,
        theta: f64,
        tight: bool,
        mut rng: RngStream,
    ) -> Result<Self> {
        if !(initial_error > 0.0) || !(theta > 0.0) {
            return Err(Error::Config(format!(
                "power-decay error needs positive initial error and exponent, got {initial_error}, {theta}"
            )));
        }
        let raw = DMatrix::from_fn(q, p, |_, _| rng.standard_normal());
        let norm = spectral_norm(&raw);
        if norm <= 0.0 {
            return Err(Error::Config("degenerate error direction".into()));
        }
        Ok(Self::PowerDecay {
            initial_error,
            theta,
            direction: raw / norm,
            tight,
            rng: Box::new(rng),
        })
    }

    pub fn learned(rls: RlsState) -> Self {
        Self::Learned { rls, last: None }
    }

    /// `H_hat_k`. Variants other than `Learned` synthesize their error around `h_true`.
    pub fn get_sensitivity(&mut self, k: usize, h_true: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::Exact => h_true.clone(),
            Self::FixedPerturbed { estimate } => estimate.clone(),
            Self::PowerDecay {
                initial_error,
                theta,
                direction,
                tight,
                rng,
            } => {
                let r = if *tight { 1.0 } else { rng.uniform(0.0, 1.0) };
                let magnitude = r * *initial_error / ((k + 1) as f64).powf(*theta);
                h_true + &*direction * magnitude
            }
            Self::Learned { rls, .. } => rls.estimate().clone(),
        }
    }

    /// Feeds a new measurement to estimating providers; a no-op for the others.
    pub fn observe(&mut self, u: &DVector<f64>, y: &DVector<f64>) -> Result<()> {
        if let Self::Learned { rls, last } = self {
            if let Some((u_prev, y_prev)) = last.as_ref() {
                rls.update(&(u - u_prev), &(y - y_prev))?;
            }
            *last = Some((u.clone(), y.clone()));
        }
        Ok(())
    }
}

/// Provider description as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SensitivitySpec {
    Exact,
    FixedPerturbed {
        bound: f64,
        #[serde(default)]
        scale: PerturbationScale,
    },
    PowerDecay {
        initial_error: f64,
        theta: f64,
        #[serde(default = "default_true")]
        tight: bool,
    },
    Learned {
        #[serde(default = "default_forgetting")]
        forgetting: f64,
        #[serde(default = "default_initial_covariance")]
        initial_covariance: f64,
        /// The initial estimate is a perturbation of the reference with this bound.
        prior_bound: f64,
        #[serde(default)]
        prior_scale: PerturbationScale,
    },
}

fn default_true() -> bool {
    true
}
fn default_forgetting() -> f64 {
    0.99
}
fn default_initial_covariance() -> f64 {
    1e3
}

impl SensitivitySpec {
    /// `reference` is the nominal model being perturbed; every provider built
    /// from the same `seed` draws the same perturbation.
    pub fn build(&self, reference: &DMatrix<f64>, seed: u64) -> Result<SensitivityProvider> {
        let perturbation_rng = || RngStream::new(seed, 2);
        match self {
            SensitivitySpec::Exact => Ok(SensitivityProvider::Exact),
            SensitivitySpec::FixedPerturbed { bound, scale } => {
                SensitivityProvider::fixed_perturbed(reference, *bound, *scale, &mut perturbation_rng())
            }
            SensitivitySpec::PowerDecay {
                initial_error,
                theta,
                tight,
            } => SensitivityProvider::power_decay(
                reference.nrows(),
                reference.ncols(),
                *initial_error,
                *theta,
                *tight,
                RngStream::new(seed, 3),
            ),
            SensitivitySpec::Learned {
                forgetting,
                initial_covariance,
                prior_bound,
                prior_scale,
            } => {
                let prior = perturb(reference, *prior_bound, *prior_scale, &mut perturbation_rng())?;
                Ok(SensitivityProvider::learned(RlsState::new(
                    prior,
                    *initial_covariance,
                    *forgetting,
                )?))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{make_benchmark_plant, PlantDims};

    #[test]
    fn exact_provider_returns_truth() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let mut prov = SensitivityProvider::Exact;
        for k in [0, 1, 1000] {
            assert_eq!(prov.get_sensitivity(k, &h), h);
        }
    }

    #[test]
    fn power_decay_meets_its_bound() {
        let h = DMatrix::from_fn(5, 10, |i, j| (i * 10 + j) as f64 * 0.1);
        let mut tight = SensitivityProvider::power_decay(5, 10, 1.0, 1.0 / 3.0, true, RngStream::new(1, 0)).unwrap();
        let err7 = spectral_norm(&(tight.get_sensitivity(7, &h) - &h));
        assert!((err7 - 0.5).abs() < 1e-12, "{err7}");
        let mut loose = SensitivityProvider::power_decay(5, 10, 2.0, 0.2, false, RngStream::new(1, 0)).unwrap();
        for k in 0..200 {
            let err = spectral_norm(&(loose.get_sensitivity(k, &h) - &h));
            assert!(err <= 2.0 / ((k + 1) as f64).powf(0.2) + 1e-12);
        }
    }

    #[test]
    fn fixed_perturbation_respects_the_benchmark_noise_bound() {
        let plant = make_benchmark_plant(1, PlantDims::default()).unwrap();
        let reference = plant.linear_sensitivity();
        let mut prov = SensitivitySpec::FixedPerturbed {
            bound: 0.10,
            scale: PerturbationScale::MaxElement,
        }
        .build(reference, 99)
        .unwrap();
        let h_hat = prov.get_sensitivity(0, reference);
        assert!((&h_hat - reference).amax() <= 0.10 * reference.amax());
        assert_ne!(&h_hat, reference);
        // time invariant, whatever the truth is
        let other = plant.true_sensitivity(&DVector::from_element(10, 1.0)).unwrap();
        assert_eq!(prov.get_sensitivity(500, &other), h_hat);
    }

    #[test]
    fn elementwise_perturbation_is_relative() {
        let reference = DMatrix::from_row_slice(2, 2, &[1.0, -10.0, 0.0, 100.0]);
        let h_hat = perturb(&reference, 0.3, PerturbationScale::Elementwise, &mut RngStream::new(5, 0)).unwrap();
        for (a, b) in h_hat.iter().zip(reference.iter()) {
            assert!((a - b).abs() <= 0.3 * b.abs() + 1e-15);
        }
    }

    #[test]
    fn bound_outside_unit_interval_is_rejected() {
        let reference = DMatrix::identity(2, 2);
        assert!(perturb(&reference, 1.0, PerturbationScale::MaxElement, &mut RngStream::new(0, 0)).is_err());
        assert!(perturb(&reference, -0.1, PerturbationScale::MaxElement, &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn rls_zero_innovation_and_zero_excitation_leave_state_alone() {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, -1.0, 3.0, 0.5]);
        let mut rls = RlsState::new(h.clone(), 1e3, 0.99).unwrap();
        let du = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let dy = &h * &du;
        rls.update(&du, &dy).unwrap();
        assert!((rls.estimate() - &h).amax() < 1e-12);

        let before = rls.clone();
        assert!(!rls.update(&DVector::zeros(3), &DVector::from_vec(vec![1.0, 1.0])).unwrap());
        assert_eq!(rls, before);
    }

    #[test]
    fn rls_learns_a_static_linear_map() {
        let mut rng = RngStream::new(17, 0);
        let truth = DMatrix::from_fn(5, 10, |_, _| rng.standard_normal());
        let prior = DMatrix::zeros(5, 10);
        let initial_err = (&prior - &truth).norm();
        let mut rls = RlsState::new(prior, 1e3, 0.99).unwrap();
        for _ in 0..500 {
            let du = rng.normal_vector(10);
            let dy = &truth * &du;
            rls.update(&du, &dy).unwrap();
            let p = rls.covariance();
            assert!((p - p.transpose()).amax() == 0.0);
        }
        let final_err = (rls.estimate() - &truth).norm();
        assert!(final_err <= 0.01 * initial_err, "{final_err} vs {initial_err}");
        assert!(rls.covariance().clone().cholesky().is_some());
    }

    #[test]
    fn learned_provider_consumes_measurement_pairs() {
        let truth = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        let rls = RlsState::new(DMatrix::zeros(1, 2), 1e3, 1.0).unwrap();
        let mut prov = SensitivityProvider::learned(rls);
        let mut rng = RngStream::new(2, 0);
        for _ in 0..20 {
            let u = rng.normal_vector(2);
            let y = &truth * &u;
            prov.observe(&u, &y).unwrap();
        }
        let est = prov.get_sensitivity(20, &DMatrix::zeros(1, 2));
        assert!((est - truth).amax() < 1e-3);
    }

    #[test]
    fn spec_parses_from_config_text() {
        let spec: SensitivitySpec = toml::from_str("kind = \"fixed-perturbed\"\nbound = 0.3\nscale = \"elementwise\"").unwrap();
        assert_eq!(
            spec,
            SensitivitySpec::FixedPerturbed {
                bound: 0.3,
                scale: PerturbationScale::Elementwise
            }
        );
    }
}
