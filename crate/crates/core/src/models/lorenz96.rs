//! Stochastic Lorenz 96: one RK4 step of the forced cyclic system per model step.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{Drift, NoiseCov, ObsOperator, SsmDefinition};

pub const FORCING: f64 = 8.0;

/// `dx^i/dt = x^{i-1} (x^{i+1} - x^{i-2}) - x^i + F` with cyclic indices.
pub fn lorenz96_drift(x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; x.len()];
    lorenz96_drift_into(x, &mut out)?;
    Ok(out)
}

fn lorenz96_drift_into(x: &[f64], out: &mut [f64]) -> Result<()> {
    let d = x.len();
    if d < 4 {
        return Err(Error::Contract(format!("Lorenz 96 needs d >= 4, got {d}")));
    }
    for i in 0..d {
        let im1 = x[(i + d - 1) % d];
        let im2 = x[(i + d - 2) % d];
        let ip1 = x[(i + 1) % d];
        out[i] = im1 * (ip1 - im2) - x[i] + FORCING;
    }
    Ok(())
}

/// Classical fourth-order Runge-Kutta step.
pub fn rk4_step<F>(drift: F, x: &[f64], dt: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !(dt > 0.0) {
        return Err(Error::Contract(format!("RK4 step needs dt > 0, got {dt}")));
    }
    let axpy = |a: f64, k: &[f64]| -> Vec<f64> { x.iter().zip(k).map(|(xi, ki)| xi + a * ki).collect() };
    let k1 = drift(x)?;
    let k2 = drift(&axpy(0.5 * dt, &k1))?;
    let k3 = drift(&axpy(0.5 * dt, &k2))?;
    let k4 = drift(&axpy(dt, &k3))?;
    Ok(x.iter()
        .enumerate()
        .map(|(i, xi)| xi + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub struct Lorenz96Drift {
    d: usize,
    dt: f64,
}

impl Lorenz96Drift {
    pub fn new(d: usize, dt: f64) -> Result<Self> {
        if d < 4 {
            return Err(Error::Contract(format!("Lorenz 96 needs d >= 4, got {d}")));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self { d, dt })
    }
}

impl Drift for Lorenz96Drift {
    fn dim(&self) -> usize {
        self.d
    }

    fn apply(&self, _step: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let next = rk4_step(lorenz96_drift, x, self.dt)?;
        out.copy_from_slice(&next);
        Ok(())
    }

    fn name(&self) -> &str {
        "lorenz96"
    }
}

/// Fully observed stochastic Lorenz 96 with scalar noise square roots.
pub fn lorenz96_model(
    d: usize,
    dt: f64,
    r1_sqrt: f64,
    r2_sqrt: f64,
    obs_frequency: usize,
    x0: Vec<f64>,
) -> Result<SsmDefinition> {
    SsmDefinition::new(
        Arc::new(Lorenz96Drift::new(d, dt)?),
        NoiseCov::scalar(d, r1_sqrt)?,
        NoiseCov::scalar(d, r2_sqrt)?,
        ObsOperator::Identity(d),
        obs_frequency,
        x0,
    )
}

/// `x^i = 8` except coordinate `perturbed` (0-based) which is `8 + eps`.
pub fn perturbed_equilibrium(d: usize, perturbed: usize, eps: f64) -> Vec<f64> {
    let mut x = vec![FORCING; d];
    if perturbed < d {
        x[perturbed] += eps;
    }
    x
}
