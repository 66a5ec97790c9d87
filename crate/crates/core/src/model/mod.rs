//! State-space model contract.
//!
//! ```text
//! X_n = q_n(X_{n-1}) + R1^{1/2} W_n
//! Y_m = C X_{m k} + R2^{1/2} V_m
//! ```
//!
//! [`SsmDefinition`] packages drift, noise square roots, observation operator
//! and observation frequency. Filters are written against the
//! [`StateSpaceModel`] trait so that non-Gaussian test models (see
//! [`factorized`]) can be plugged in as well.

pub mod factorized;
mod noise;
mod obs;

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{check_len, Error, Result};

pub use noise::NoiseCov;
pub use obs::ObsOperator;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Deterministic part `q_n` of the signal dynamics.
pub trait Drift: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `q_step(x)` into `out`. `step` is the index of the state being
    /// produced, so the transition `x_{n-1} -> x_n` uses `step = n`.
    fn apply(&self, step: usize, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Matrix `A` when the drift is linear, `q(x) = A x`.
    fn linear_map(&self) -> Option<DMatrix<f64>> {
        None
    }

    fn name(&self) -> &str;
}

/// What every filter in this crate needs from a model.
pub trait StateSpaceModel: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn x0(&self) -> &[f64];
    fn obs_frequency(&self) -> usize;

    /// `log f(x_prev, x)` for the transition into time `step`.
    fn transition_logpdf(&self, step: usize, x_prev: &[f64], x: &[f64]) -> Result<f64>;

    /// `log g(x, y)`.
    fn likelihood_logpdf(&self, x: &[f64], y: &[f64]) -> Result<f64>;

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        step: usize,
        rng: &mut R,
        x_prev: &[f64],
    ) -> Result<Vec<f64>>;

    fn sample_observation<R: Rng + ?Sized>(&self, rng: &mut R, x: &[f64]) -> Result<Vec<f64>>;

    /// Whether an observation exists at time `n` (`n` a positive multiple of k̂).
    fn is_observed(&self, n: usize) -> bool {
        n > 0 && n % self.obs_frequency() == 0
    }
}

/// Gaussian state-space model with additive noise.
#[derive(Clone)]
pub struct SsmDefinition {
    drift: Arc<dyn Drift>,
    r1: NoiseCov,
    r2: NoiseCov,
    obs: ObsOperator,
    obs_frequency: usize,
    x0: Vec<f64>,
}

impl fmt::Debug for SsmDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SsmDefinition")
            .field("drift", &self.drift.name())
            .field("dim_x", &self.dim_x())
            .field("dim_y", &self.dim_y())
            .field("obs_frequency", &self.obs_frequency)
            .finish()
    }
}

impl SsmDefinition {
    pub fn new(
        drift: Arc<dyn Drift>,
        r1: NoiseCov,
        r2: NoiseCov,
        obs: ObsOperator,
        obs_frequency: usize,
        x0: Vec<f64>,
    ) -> Result<Self> {
        let d = drift.dim();
        if d == 0 {
            return Err(Error::InvalidParameter("state dimension must be positive".into()));
        }
        if r1.dim() != d {
            return Err(Error::dim("r1_sqrt", d, r1.dim()));
        }
        if obs.dim_x() != d {
            return Err(Error::dim("obs_matrix columns", d, obs.dim_x()));
        }
        if obs.dim_y() == 0 {
            return Err(Error::InvalidParameter("observation dimension must be positive".into()));
        }
        if r2.dim() != obs.dim_y() {
            return Err(Error::dim("r2_sqrt", obs.dim_y(), r2.dim()));
        }
        if obs_frequency == 0 {
            return Err(Error::InvalidParameter("obs_frequency must be >= 1".into()));
        }
        check_len("x0", &x0, d)?;
        Ok(Self {
            drift,
            r1,
            r2,
            obs,
            obs_frequency,
            x0,
        })
    }

    pub fn drift(&self) -> &dyn Drift {
        self.drift.as_ref()
    }

    pub fn r1(&self) -> &NoiseCov {
        &self.r1
    }

    pub fn r2(&self) -> &NoiseCov {
        &self.r2
    }

    pub fn obs(&self) -> &ObsOperator {
        &self.obs
    }

    /// Same model with a different initial state.
    pub fn with_x0(&self, x0: Vec<f64>) -> Result<Self> {
        check_len("x0", &x0, self.dim_x())?;
        Ok(Self { x0, ..self.clone() })
    }

    pub fn drift_at(&self, step: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_len("state", x, self.dim_x())?;
        let mut out = vec![0.0; self.dim_x()];
        self.drift.apply(step, x, &mut out)?;
        Ok(out)
    }
}

impl StateSpaceModel for SsmDefinition {
    fn dim_x(&self) -> usize {
        self.drift.dim()
    }

    fn dim_y(&self) -> usize {
        self.obs.dim_y()
    }

    fn x0(&self) -> &[f64] {
        &self.x0
    }

    fn obs_frequency(&self) -> usize {
        self.obs_frequency
    }

    fn transition_logpdf(&self, step: usize, x_prev: &[f64], x: &[f64]) -> Result<f64> {
        check_len("state", x, self.dim_x())?;
        let mut resid = self.drift_at(step, x_prev)?;
        resid.iter_mut().zip(x).for_each(|(r, a)| *r = a - *r);
        Ok(self.r1.logpdf_residual(&resid))
    }

    fn likelihood_logpdf(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len("state", x, self.dim_x())?;
        check_len("observation", y, self.dim_y())?;
        let mut resid = self.obs.apply(x);
        resid.iter_mut().zip(y).for_each(|(r, a)| *r = a - *r);
        Ok(self.r2.logpdf_residual(&resid))
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        step: usize,
        rng: &mut R,
        x_prev: &[f64],
    ) -> Result<Vec<f64>> {
        let mut x = self.drift_at(step, x_prev)?;
        self.r1.add_noise(rng, &mut x);
        Ok(x)
    }

    fn sample_observation<R: Rng + ?Sized>(&self, rng: &mut R, x: &[f64]) -> Result<Vec<f64>> {
        check_len("state", x, self.dim_x())?;
        let mut y = self.obs.apply(x);
        self.r2.add_noise(rng, &mut y);
        Ok(y)
    }
}

/// `log N(x; mean, diag(var))`, normalizing constant included.
pub fn diag_gaussian_logpdf(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    let mut q = 0.0;
    let mut logdet = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean).zip(var) {
        let r = xi - mi;
        q += r * r / vi;
        logdet += vi.ln();
    }
    -0.5 * (x.len() as f64 * LN_2PI + logdet + q)
}

#[cfg(test)]
pub(crate) fn standard_normals<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}
