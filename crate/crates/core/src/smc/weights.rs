use crate::error::{Error, Result};

/// `log sum exp(v)`, shifted by the maximum. `-inf` when every entry is `-inf`.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Shifts `log_w` in place so that `log sum exp = 0`; returns the shift.
pub fn normalize_log_weights(log_w: &mut [f64]) -> Result<f64> {
    let lse = log_sum_exp(log_w);
    if !lse.is_finite() {
        return Err(Error::DegenerateEnsemble(format!(
            "cannot normalize log-weights (log-sum-exp = {lse})"
        )));
    }
    for w in log_w.iter_mut() {
        *w -= lse;
    }
    Ok(lse)
}

/// Effective sample size `(sum w)^2 / sum w^2` from unnormalized log-weights.
pub fn ess(log_w: &[f64]) -> Result<f64> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegenerateEnsemble(
            "ESS undefined: no finite log-weight".into(),
        ));
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for &lw in log_w {
        let w = (lw - max).exp();
        s += w;
        s2 += w * w;
    }
    Ok(s * s / s2)
}

/// Particles with log-weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedEnsemble<P> {
    pub particles: Vec<P>,
    pub log_weights: Vec<f64>,
}

impl<P> WeightedEnsemble<P> {
    pub fn new(particles: Vec<P>, log_weights: Vec<f64>) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::Contract(format!(
                "ensemble needs at least 2 particles, got {}",
                particles.len()
            )));
        }
        if particles.len() != log_weights.len() {
            return Err(Error::dim("log_weights", particles.len(), log_weights.len()));
        }
        Ok(Self {
            particles,
            log_weights,
        })
    }

    /// Equally weighted ensemble (normalized log-weights `-ln N`).
    pub fn uniform(particles: Vec<P>) -> Result<Self> {
        let n = particles.len();
        Self::new(particles, vec![-(n as f64).ln(); n])
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn normalize(&mut self) -> Result<()> {
        normalize_log_weights(&mut self.log_weights).map(|_| ())
    }

    pub fn ess(&self) -> Result<f64> {
        ess(&self.log_weights)
    }

    /// Normalized weights `exp(log_w - lse)`.
    pub fn weights(&self) -> Vec<f64> {
        let lse = log_sum_exp(&self.log_weights);
        self.log_weights.iter().map(|w| (w - lse).exp()).collect()
    }
}

impl<P: Clone> WeightedEnsemble<P> {
    /// Replaces particles by `ancestors` and resets to equal weights.
    pub fn reindex(&mut self, ancestors: &[usize]) {
        self.particles = ancestors.iter().map(|&a| self.particles[a].clone()).collect();
        let n = self.particles.len();
        self.log_weights = vec![-(n as f64).ln(); n];
    }
}
