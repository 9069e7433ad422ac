//! Random primitives and numerical oracles.
//!
//! Every stochastic routine draws from an explicit [`RngStream`], so a run is a
//! pure function of its seeds. Streams are ChaCha8 generators addressed by
//! `(seed, stream)`; two owners with the same pair observe the same draws on
//! every platform.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Norms below this are treated as a degenerate normal draw and resampled.
const MIN_DIRECTION_NORM: f64 = 1e-150;

/// A seeded, splittable random stream.
#[derive(Clone, Debug, PartialEq)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    /// Stream addressed by a tuple of tags, e.g. `(purpose, replicate, variant)`.
    pub fn derive(seed: u64, tags: &[u64]) -> Self {
        Self::new(seed, mix_tags(tags))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform draw from `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn normal_vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.standard_normal())
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

// splitmix64 finalizer
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix_tags(tags: &[u64]) -> u64 {
    tags.iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, &t| mix64(acc ^ mix64(t)))
}

/// Stable 64-bit FNV-1a hash, used to turn controller labels into stream tags.
pub fn label_tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Uniform sample from the unit sphere in `R^p`.
pub fn sample_unit_sphere(rng: &mut RngStream, p: usize) -> Result<DVector<f64>> {
    if p == 0 {
        return Err(Error::Parameter("sphere dimension must be at least 1".into()));
    }
    loop {
        let g = rng.normal_vector(p);
        let norm = g.norm();
        if norm > MIN_DIRECTION_NORM {
            return Ok(g / norm);
        }
    }
}

/// Uniform sample from the closed unit ball in `R^p`.
pub fn sample_unit_ball(rng: &mut RngStream, p: usize) -> Result<DVector<f64>> {
    let direction = sample_unit_sphere(rng, p)?;
    let radius = rng.uniform(0.0, 1.0).powf(1.0 / p as f64);
    Ok(direction * radius)
}

/// Sample mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Welford accumulator for scalar samples.
#[derive(Clone, Debug, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> MonteCarloEstimate {
        MonteCarloEstimate {
            mean: self.mean,
            std_error: if self.n == 0 {
                f64::INFINITY
            } else {
                (self.variance() / self.n as f64).sqrt()
            },
        }
    }
}

/// Monte-Carlo estimate of the ball-smoothed field `f_delta(w) = E[f(w + delta v')]`,
/// `v'` uniform in the unit ball.
pub fn smooth_approx_value<F>(
    f: F,
    w: &DVector<f64>,
    delta: f64,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<MonteCarloEstimate>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("smoothing radius must be positive, got {delta}")));
    }
    if n_samples == 0 {
        return Err(Error::Parameter("need at least one Monte-Carlo sample".into()));
    }
    let mut moments = RunningMoments::default();
    for _ in 0..n_samples {
        let v = sample_unit_ball(rng, w.len())?;
        moments.push(f(&(w + v * delta)));
    }
    Ok(moments.estimate())
}

/// Componentwise Monte-Carlo estimate of `E[(p / delta) f(w + delta v) v]`
/// with `v` uniform on the unit sphere.
///
/// Returns the sample mean and the per-component standard error.
pub fn sphere_gradient_estimate<F>(
    f: F,
    w: &DVector<f64>,
    delta: f64,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<(DVector<f64>, DVector<f64>)>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if !(delta > 0.0) {
        return Err(Error::Parameter(format!("smoothing radius must be positive, got {delta}")));
    }
    if n_samples == 0 {
        return Err(Error::Parameter("need at least one Monte-Carlo sample".into()));
    }
    let p = w.len();
    let scale = p as f64 / delta;
    let mut moments = vec![RunningMoments::default(); p];
    for _ in 0..n_samples {
        let v = sample_unit_sphere(rng, p)?;
        let fv = scale * f(&(w + &v * delta));
        for (m, vi) in moments.iter_mut().zip(v.iter()) {
            m.push(fv * vi);
        }
    }
    let mean = DVector::from_iterator(p, moments.iter().map(RunningMoments::mean));
    let se = DVector::from_iterator(p, moments.iter().map(|m| m.estimate().std_error));
    Ok((mean, se))
}

/// Central-difference gradient.
pub fn finite_diff_gradient<F>(f: F, w: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {h}")));
    }
    let mut probe = w.clone();
    let mut grad = DVector::zeros(w.len());
    for i in 0..w.len() {
        let wi = w[i];
        probe[i] = wi + h;
        let up = f(&probe);
        probe[i] = wi - h;
        let down = f(&probe);
        probe[i] = wi;
        grad[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}
