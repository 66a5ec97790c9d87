use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleScheme {
    #[default]
    Systematic,
    Multinomial,
}

impl ResampleScheme {
    pub fn resample<R: Rng + ?Sized>(self, rng: &mut R, weights: &[f64]) -> Result<Vec<usize>> {
        match self {
            ResampleScheme::Systematic => systematic_resample(rng, weights),
            ResampleScheme::Multinomial => multinomial_resample(rng, weights),
        }
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Contract("cannot resample an empty ensemble".into()));
    }
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
        return Err(Error::Contract(format!("resampling weight {w} is not a finite non-negative number")));
    }
    let s: f64 = weights.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("resampling weights sum to {s}, expected 1")));
    }
    Ok(())
}

/// Systematic resampling with a single uniform offset. Output is sorted.
pub fn systematic_resample<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Result<Vec<usize>> {
    check_weights(weights)?;
    let n = weights.len();
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while u > cum && i < n - 1 {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    Ok(out)
}

/// Multinomial resampling via sorted uniforms. Output is sorted.
pub fn multinomial_resample<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> Result<Vec<usize>> {
    check_weights(weights)?;
    let n = weights.len();
    let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    u.sort_by(f64::total_cmp);
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut i = 0;
    for uk in u {
        while uk > cum && i < n - 1 {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    Ok(out)
}
