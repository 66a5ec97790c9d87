//! Random-walk Metropolis over the lag window.

use std::ops::Range;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RwmConfig {
    /// Metropolis sweeps per temperature.
    pub sweeps: usize,
    /// Target band for the mean acceptance rate.
    pub band: (f64, f64),
    pub initial_multiplier: f64,
    pub adapt: bool,
}

impl Default for RwmConfig {
    fn default() -> Self {
        Self {
            sweeps: 20,
            band: (0.15, 0.25),
            initial_multiplier: 1.0,
            adapt: true,
        }
    }
}

pub const MIN_MULTIPLIER: f64 = 1e-4;
pub const MAX_MULTIPLIER: f64 = 1e4;

/// Temperature factor `(phi + 2) / (phi + 1)` applied to the proposal variance.
pub fn temperature_factor(phi: f64) -> f64 {
    (phi + 2.0) / (phi + 1.0)
}

/// Proposal standard deviation `m * sqrt(2.38^2 / d * alpha(phi))`.
pub fn proposal_sd(multiplier: f64, d: usize, phi: f64) -> f64 {
    multiplier * (2.38 * 2.38 / d as f64 * temperature_factor(phi)).sqrt()
}

/// Shrinks the multiplier by 0.7 below the band, grows it by 1.3 above.
pub fn adapt_proposal_scale(multiplier: f64, acc_rate: f64, band: (f64, f64)) -> f64 {
    let m = if acc_rate < band.0 {
        multiplier * 0.7
    } else if acc_rate > band.1 {
        multiplier * 1.3
    } else {
        multiplier
    };
    m.clamp(MIN_MULTIPLIER, MAX_MULTIPLIER)
}

/// `sweeps` Metropolis updates of `x[movable]` with isotropic Gaussian
/// increments of standard deviation `sd`. `current` holds `log_target(x)`
/// and is kept in sync. Returns the number of accepted moves.
pub fn rwm_sweep<R, F>(
    x: &mut [f64],
    current: &mut f64,
    log_target: F,
    sd: f64,
    sweeps: usize,
    movable: Range<usize>,
    rng: &mut R,
) -> usize
where
    R: Rng + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    let mut prop = x.to_vec();
    let mut accepted = 0;
    for _ in 0..sweeps {
        for i in movable.clone() {
            let z: f64 = rng.sample(StandardNormal);
            prop[i] = x[i] + sd * z;
        }
        let lp = log_target(&prop);
        let u: f64 = rng.random();
        if u.ln() < lp - *current {
            x[movable.clone()].copy_from_slice(&prop[movable.clone()]);
            *current = lp;
            accepted += 1;
        }
    }
    accepted
}
