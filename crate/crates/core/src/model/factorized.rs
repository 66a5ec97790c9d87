//! Coordinatewise-factorized model family.
//!
//! Every log-density splits into a bounded term acting on the first `m`
//! coordinates plus a sum of identical scalar terms over all `d` coordinates:
//!
//! ```text
//! log g(x, y) = g~(x^{1:m}, y) + sum_j g-(x^j, y)
//! log f(x, z) = f~(x^{1:m}, z^{1:m}) + sum_j f-(x^j, z^j)
//! log mu(x)   = mu~(x^{1:m}) + sum_j mu-(x^j)
//! ```
//!
//! Used to check that the tempered filter's weight behaviour is stable in `d`.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{StateSpaceModel, LN_2PI};
use crate::error::{check_len, Error, Result};

pub type ScalarObsTerm = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type HeadObsTerm = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type ScalarPairTerm = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type HeadPairTerm = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
pub type ScalarTerm = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type HeadTerm = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct FactorizedModel {
    /// Size of the dependent head block.
    pub m: usize,
    pub g_bar: ScalarObsTerm,
    pub g_tilde: HeadObsTerm,
    pub f_bar: ScalarPairTerm,
    pub f_tilde: HeadPairTerm,
    pub mu_bar: ScalarTerm,
    pub mu_tilde: HeadTerm,
    /// Compact coordinate domain `E = [lo, hi]`.
    pub domain: (f64, f64),
    /// Declared bound on the absolute value of every term over `E`.
    pub bound: f64,
}

/// Assembled log-densities at a fixed dimension.
#[derive(Clone, Copy)]
pub struct FactorizedDensities<'a> {
    model: &'a FactorizedModel,
    d: usize,
}

/// Builds the assembled `(log g, log f, log mu)` evaluators at dimension `d`.
pub fn factorized_logpdfs(fm: &FactorizedModel, d: usize) -> Result<FactorizedDensities<'_>> {
    if d < fm.m {
        return Err(Error::Contract(format!(
            "dimension {d} is smaller than the head block size {}",
            fm.m
        )));
    }
    Ok(FactorizedDensities { model: fm, d })
}

impl FactorizedDensities<'_> {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn log_g(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len("state", x, self.d)?;
        let m = self.model.m;
        let head = (self.model.g_tilde)(&x[..m], y);
        Ok(head + x.iter().map(|&xj| (self.model.g_bar)(xj, y)).sum::<f64>())
    }

    pub fn log_f(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        check_len("state", x, self.d)?;
        check_len("state", z, self.d)?;
        let m = self.model.m;
        let head = (self.model.f_tilde)(&x[..m], &z[..m]);
        Ok(head
            + x.iter()
                .zip(z)
                .map(|(&a, &b)| (self.model.f_bar)(a, b))
                .sum::<f64>())
    }

    pub fn log_mu(&self, x: &[f64]) -> Result<f64> {
        check_len("state", x, self.d)?;
        let m = self.model.m;
        let head = (self.model.mu_tilde)(&x[..m]);
        Ok(head + x.iter().map(|&xj| (self.model.mu_bar)(xj)).sum::<f64>())
    }
}

impl FactorizedModel {
    /// Grid check that every term stays within the declared bound on `E`.
    ///
    /// Head terms are evaluated on the `m`-fold product grid, so keep `points`
    /// small when `m` is large. Returns the largest absolute value seen.
    pub fn check_bounded(&self, points: usize, ys: &[Vec<f64>]) -> Result<f64> {
        let (lo, hi) = self.domain;
        let grid: Vec<f64> = (0..points)
            .map(|k| lo + (hi - lo) * k as f64 / (points.max(2) - 1) as f64)
            .collect();
        let mut worst = 0.0f64;
        let mut see = |v: f64| worst = worst.max(v.abs());

        for &a in &grid {
            see((self.mu_bar)(a));
            for &b in &grid {
                see((self.f_bar)(a, b));
            }
            for y in ys {
                see((self.g_bar)(a, y));
            }
        }
        let heads = product_grid(&grid, self.m);
        for h in &heads {
            see((self.mu_tilde)(h));
            for y in ys {
                see((self.g_tilde)(h, y));
            }
            for h2 in &heads {
                see((self.f_tilde)(h, h2));
            }
        }
        if worst > self.bound {
            return Err(Error::Contract(format!(
                "term magnitude {worst} exceeds declared bound {}",
                self.bound
            )));
        }
        Ok(worst)
    }
}

fn product_grid(grid: &[f64], m: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|p| {
                grid.iter().map(move |&g| {
                    let mut q = p.clone();
                    q.push(g);
                    q
                })
            })
            .collect();
    }
    out
}

/// Filterable member of the factorized family.
///
/// Coordinates follow independent AR(1) dynamics `z^j = rho x^j + sigma w`
/// (so `f~ = 0` and the transition can be sampled exactly), a scalar
/// observation informs every coordinate through `g-`, and a bounded cosine
/// term couples the head block to the observation.
#[derive(Debug, Clone)]
pub struct FactorizedSsm {
    pub d: usize,
    pub m: usize,
    pub rho: f64,
    pub sigma: f64,
    pub tau: f64,
    pub coupling: f64,
    x0: Vec<f64>,
}

impl FactorizedSsm {
    pub fn new(d: usize, m: usize, rho: f64, sigma: f64, tau: f64, coupling: f64, x0: f64) -> Result<Self> {
        if d < m || d == 0 {
            return Err(Error::Contract(format!("need d >= max(m, 1), got d={d}, m={m}")));
        }
        if !(sigma > 0.0 && tau > 0.0) {
            return Err(Error::InvalidParameter("sigma and tau must be positive".into()));
        }
        Ok(Self {
            d,
            m,
            rho,
            sigma,
            tau,
            coupling,
            x0: vec![x0; d],
        })
    }

    /// The six terms backing this model, on the domain `[-r, r]`.
    pub fn factorized_model(&self, r: f64) -> FactorizedModel {
        let (rho, sigma, tau, kappa) = (self.rho, self.sigma, self.tau, self.coupling);
        let gauss = |v: f64, s: f64| -0.5 * (LN_2PI + 2.0 * s.ln() + (v / s) * (v / s));
        // Bound from the quadratic terms over E plus the normalizing constants.
        let span = 2.0 * r + rho.abs() * r + r;
        let bound = 0.5 * (LN_2PI + 2.0 * sigma.ln().abs().max(tau.ln().abs()))
            + 0.5 * (span / sigma.min(tau)).powi(2)
            + kappa.abs()
            + 1.0;
        FactorizedModel {
            m: self.m,
            g_bar: Arc::new(move |x, y| gauss(y[0] - x, tau)),
            g_tilde: Arc::new(move |h, y| kappa * (h.iter().sum::<f64>() - y[0]).cos()),
            f_bar: Arc::new(move |x, z| gauss(z - rho * x, sigma)),
            f_tilde: Arc::new(|_, _| 0.0),
            mu_bar: Arc::new(move |x| gauss(x, sigma)),
            mu_tilde: Arc::new(move |h| 0.5 * kappa * h.iter().sum::<f64>().sin()),
            domain: (-r, r),
            bound,
        }
    }
}

impl StateSpaceModel for FactorizedSsm {
    fn dim_x(&self) -> usize {
        self.d
    }

    fn dim_y(&self) -> usize {
        1
    }

    fn x0(&self) -> &[f64] {
        &self.x0
    }

    fn obs_frequency(&self) -> usize {
        1
    }

    fn transition_logpdf(&self, _step: usize, x_prev: &[f64], x: &[f64]) -> Result<f64> {
        check_len("state", x_prev, self.d)?;
        check_len("state", x, self.d)?;
        let s = self.sigma;
        Ok(x_prev
            .iter()
            .zip(x)
            .map(|(a, b)| {
                let z = (b - self.rho * a) / s;
                -0.5 * (LN_2PI + 2.0 * s.ln() + z * z)
            })
            .sum())
    }

    fn likelihood_logpdf(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_len("state", x, self.d)?;
        check_len("observation", y, 1)?;
        let t = self.tau;
        let head: f64 = x[..self.m].iter().sum();
        let coord: f64 = x
            .iter()
            .map(|xi| {
                let z = (y[0] - xi) / t;
                -0.5 * (LN_2PI + 2.0 * t.ln() + z * z)
            })
            .sum();
        Ok(self.coupling * (head - y[0]).cos() + coord)
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        _step: usize,
        rng: &mut R,
        x_prev: &[f64],
    ) -> Result<Vec<f64>> {
        check_len("state", x_prev, self.d)?;
        Ok(x_prev
            .iter()
            .map(|a| {
                let w: f64 = rng.sample(StandardNormal);
                self.rho * a + self.sigma * w
            })
            .collect())
    }

    /// Scalar observation centred on the coordinate mean; the bounded head
    /// term is ignored when simulating data.
    fn sample_observation<R: Rng + ?Sized>(&self, rng: &mut R, x: &[f64]) -> Result<Vec<f64>> {
        check_len("state", x, self.d)?;
        let mean = x.iter().sum::<f64>() / self.d as f64;
        let w: f64 = rng.sample(StandardNormal);
        Ok(vec![mean + self.tau * w])
    }
}
