use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::proposal::{PredictorSource, ProposalMu};
use super::rwm::{adapt_proposal_scale, proposal_sd, rwm_sweep, RwmConfig};
use crate::error::{check_len, Error, Result};
use crate::model::StateSpaceModel;
use crate::rng::{stream, tag};
use crate::smc::{
    run_tempering, KernelStats, ResampleScheme, TemperMode, TemperedKernel, TemperingOptions,
    WeightedEnsemble,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaggedConfig {
    pub particles: usize,
    /// Resampling threshold on the ESS, in `[1, particles]`.
    pub n_star: f64,
    pub lag: usize,
    /// First temperature of every tempering pass.
    pub initial_phi: f64,
    pub tempering: TemperMode,
    pub scheme: ResampleScheme,
    pub rwm: RwmConfig,
    pub max_temperatures: usize,
}

impl Default for LaggedConfig {
    fn default() -> Self {
        Self {
            particles: 100,
            n_star: 80.0,
            lag: 1,
            initial_phi: 0.0,
            tempering: TemperMode::Adaptive,
            scheme: ResampleScheme::Systematic,
            rwm: RwmConfig::default(),
            max_temperatures: 10_000,
        }
    }
}

impl LaggedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.particles < 2 {
            return bad(format!("need at least 2 particles, got {}", self.particles));
        }
        if !(1.0..=self.particles as f64).contains(&self.n_star) {
            return bad(format!("N* must lie in [1, {}], got {}", self.particles, self.n_star));
        }
        if self.lag == 0 {
            return bad("lag must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.initial_phi) {
            return bad(format!("initial temperature must lie in [0, 1), got {}", self.initial_phi));
        }
        if self.rwm.sweeps == 0 {
            return bad("RWM sweeps must be >= 1".into());
        }
        if !(self.rwm.initial_multiplier > 0.0) {
            return bad("RWM multiplier must be positive".into());
        }
        if let TemperMode::Fixed { steps: 0 } = self.tempering {
            return bad("fixed tempering needs at least one step".into());
        }
        Ok(())
    }
}

/// Per-particle lag window: an anchor state followed by the window blocks,
/// stored contiguously (`d` values per block).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowParticle {
    pub data: Vec<f64>,
}

impl WindowParticle {
    pub fn blocks(&self, d: usize) -> usize {
        self.data.len() / d - 1
    }

    pub fn newest(&self, d: usize) -> &[f64] {
        &self.data[self.data.len() - d..]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub n: usize,
    pub observed: bool,
    /// Number of temperatures `K_n` (0 without an observation).
    pub temperatures: usize,
    pub phis: Vec<f64>,
    pub ess: Vec<f64>,
    pub resampled: Vec<bool>,
    pub acceptance: Vec<f64>,
    pub log_incr_var: Vec<f64>,
    pub final_ess: f64,
    pub final_resampled: bool,
    pub rwm_multiplier: f64,
    pub window_blocks: usize,
    pub wall_ms: f64,
}

/// `log mu_{n-L}(x_{n-L+1}) + log g(x_n, y_n) - log f(x_{n-L}, x_{n-L+1})`
/// for `n > L`, `log g(x_n, y_n)` otherwise. `mu = None` stands for the
/// transition density, in which case the ratio cancels.
#[allow(clippy::too_many_arguments)]
pub fn incremental_log_weight<M: StateSpaceModel>(
    model: &M,
    n: usize,
    lag: usize,
    mu: Option<&ProposalMu>,
    x_lag: &[f64],
    x_lag_next: &[f64],
    x_n: &[f64],
    y_n: &[f64],
    particle: usize,
) -> Result<f64> {
    let mut w = model.likelihood_logpdf(x_n, y_n)?;
    if n > lag {
        if let Some(mu) = mu {
            w += mu.logpdf(x_lag_next) - model.transition_logpdf(n - lag + 1, x_lag, x_lag_next)?;
        }
    }
    if !w.is_finite() {
        return Err(Error::DegenerateParticle {
            index: particle,
            step: n,
            reason: format!("incremental log-weight is {w}"),
        });
    }
    Ok(w)
}

/// Boundary index `b`: under the lagged target at time `m`, blocks `t <= b`
/// carry `mu_{t-1}` and later ones carry `f`.
fn mu_boundary(m: usize, lag: usize) -> usize {
    (m + 1).saturating_sub(lag).max(1)
}

/// Window-restricted log densities of the current tempering pass.
struct WindowTarget<'a, M> {
    model: &'a M,
    d: usize,
    start: usize,
    n: usize,
    b_base: usize,
    b_final: usize,
    mus: &'a BTreeMap<usize, Option<ProposalMu>>,
    ys: &'a BTreeMap<usize, Vec<f64>>,
}

impl<M: StateSpaceModel> WindowTarget<'_, M> {
    /// Returns `(log base, lambda)`: the previous target extended by `f`,
    /// and the log ratio of the new target to it.
    fn terms(&self, data: &[f64]) -> Result<(f64, f64)> {
        let d = self.d;
        let (mut base, mut lambda) = (0.0, 0.0);
        for t in self.start..=self.n {
            let k = t - self.start + 1;
            let prev = &data[(k - 1) * d..k * d];
            let x = &data[k * d..(k + 1) * d];
            let log_mu = || match self.mus.get(&t) {
                Some(Some(mu)) => Ok(mu.logpdf(x)),
                _ => self.model.transition_logpdf(t, prev, x),
            };
            if t <= self.b_base {
                base += log_mu()?;
            } else {
                let lf = self.model.transition_logpdf(t, prev, x)?;
                base += lf;
                if t <= self.b_final {
                    lambda += log_mu()? - lf;
                }
            }
            if let Some(y) = self.ys.get(&t) {
                let lg = self.model.likelihood_logpdf(x, y)?;
                if t < self.n {
                    base += lg;
                } else {
                    lambda += lg;
                }
            }
        }
        Ok((base, lambda))
    }

    fn tempered(&self, data: &[f64], phi: f64) -> f64 {
        match self.terms(data) {
            Ok((b, l)) => {
                let v = if phi == 0.0 { b } else { b + phi * l };
                if v.is_nan() {
                    f64::NEG_INFINITY
                } else {
                    v
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

struct WindowKernel<'a, 'b, M> {
    target: &'a WindowTarget<'b, M>,
    cfg: &'a RwmConfig,
    multiplier: &'a mut f64,
    seed: u64,
}

impl<M: StateSpaceModel> TemperedKernel<WindowParticle> for WindowKernel<'_, '_, M> {
    fn apply(&mut self, phi: f64, stage: usize, particles: &mut [WindowParticle]) -> Result<KernelStats> {
        let d = self.target.d;
        let sd = proposal_sd(*self.multiplier, d, phi);
        let (seed, n, sweeps) = (self.seed, self.target.n as u64, self.cfg.sweeps);
        let target = self.target;
        let accepted: usize = particles
            .par_iter_mut()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = stream(seed, &[tag::RWM, n, stage as u64, i as u64]);
                let eval = |x: &[f64]| target.tempered(x, phi);
                let mut cur = eval(&p.data);
                let len = p.data.len();
                rwm_sweep(&mut p.data, &mut cur, eval, sd, sweeps, d..len, &mut rng)
            })
            .sum();
        let acceptance = accepted as f64 / (particles.len() * sweeps) as f64;
        if self.cfg.adapt {
            *self.multiplier = adapt_proposal_scale(*self.multiplier, acceptance, self.cfg.band);
        }
        Ok(KernelStats { acceptance, sweeps })
    }
}

/// Lagged particle filter with adaptive tempering.
pub struct LaggedFilter<'m, M> {
    model: &'m M,
    cfg: LaggedConfig,
    seed: u64,
    mu: Box<dyn PredictorSource>,
    ens: WeightedEnsemble<WindowParticle>,
    n: usize,
    /// Time index of the first window block (the anchor sits at `start - 1`).
    start: usize,
    last_obs: usize,
    mus: BTreeMap<usize, Option<ProposalMu>>,
    ys: BTreeMap<usize, Vec<f64>>,
    multiplier: f64,
}

impl<'m, M: StateSpaceModel> LaggedFilter<'m, M> {
    pub fn new(model: &'m M, cfg: LaggedConfig, mu: Box<dyn PredictorSource>, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let particle = WindowParticle {
            data: model.x0().to_vec(),
        };
        let ens = WeightedEnsemble::uniform(vec![particle; cfg.particles])?;
        let multiplier = cfg.rwm.initial_multiplier;
        Ok(Self {
            model,
            cfg,
            seed,
            mu,
            ens,
            n: 0,
            start: 1,
            last_obs: 0,
            mus: BTreeMap::new(),
            ys: BTreeMap::new(),
            multiplier,
        })
    }

    pub fn time(&self) -> usize {
        self.n
    }

    pub fn ensemble(&self) -> &WeightedEnsemble<WindowParticle> {
        &self.ens
    }

    pub fn config(&self) -> &LaggedConfig {
        &self.cfg
    }

    /// Blocks currently held per particle, anchor excluded.
    pub fn window_blocks(&self) -> usize {
        self.ens.particles[0].blocks(self.model.dim_x())
    }

    pub fn mu_floor_events(&self) -> usize {
        self.mu.floor_events()
    }

    /// Self-normalized estimate of `E[phi(x_n) | y_{1:n}]`.
    pub fn filter_estimate<F>(&self, phi: F) -> Result<Vec<f64>>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        filter_estimate(&self.ens, self.model.dim_x(), phi)
    }

    pub fn filter_mean(&self) -> Result<Vec<f64>> {
        self.filter_estimate(|x| x.to_vec())
    }

    /// Advances to time `n + 1`, assimilating `y` if given.
    pub fn step(&mut self, y: Option<&[f64]>) -> Result<StepDiagnostics> {
        let clock = Instant::now();
        let d = self.model.dim_x();
        let n = self.n + 1;
        if y.is_some() && !self.model.is_observed(n) {
            return Err(Error::Contract(format!("observation supplied at unobserved time {n}")));
        }
        if let Some(y) = y {
            check_len("observation", y, self.model.dim_y())?;
        }

        let (model, seed) = (self.model, self.seed);
        self.ens
            .particles
            .par_iter_mut()
            .enumerate()
            .try_for_each(|(i, p)| -> Result<()> {
                let mut rng = stream(seed, &[tag::PROPAGATE, n as u64, i as u64]);
                let next = model.sample_transition(n, &mut rng, p.newest(d))?;
                p.data.extend_from_slice(&next);
                Ok(())
            })?;
        self.n = n;
        let mu = self.mu.advance(n, y)?;
        // mu_0 is the transition from x_0.
        self.mus.insert(n, if n == 1 { None } else { mu });

        let mut diag = StepDiagnostics {
            n,
            observed: y.is_some(),
            temperatures: 0,
            phis: Vec::new(),
            ess: Vec::new(),
            resampled: Vec::new(),
            acceptance: Vec::new(),
            log_incr_var: Vec::new(),
            final_ess: 0.0,
            final_resampled: false,
            rwm_multiplier: self.multiplier,
            window_blocks: self.window_blocks(),
            wall_ms: 0.0,
        };
        let Some(y) = y else {
            diag.final_ess = self.ens.ess()?;
            diag.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
            return Ok(diag);
        };
        self.ys.insert(n, y.to_vec());

        let b_base = mu_boundary(self.last_obs, self.cfg.lag);
        let b_final = mu_boundary(n, self.cfg.lag);
        debug_assert_eq!(b_base, self.start);
        let target = WindowTarget {
            model: self.model,
            d,
            start: self.start,
            n,
            b_base,
            b_final,
            mus: &self.mus,
            ys: &self.ys,
        };
        let opts = TemperingOptions {
            mode: self.cfg.tempering,
            n_star: self.cfg.n_star,
            initial_phi: self.cfg.initial_phi,
            scheme: self.cfg.scheme,
            seed: self.seed,
            stream_prefix: vec![n as u64],
            max_steps: self.cfg.max_temperatures,
            min_increment: 1e-9,
        };
        let mut kernel = WindowKernel {
            target: &target,
            cfg: &self.cfg.rwm,
            multiplier: &mut self.multiplier,
            seed: self.seed,
        };
        let log_ratio = |p: &WindowParticle| target.terms(&p.data).map(|t| t.1).unwrap_or(f64::NEG_INFINITY);
        let sd = run_tempering(&mut self.ens, log_ratio, &mut kernel, &opts).map_err(|e| match e {
            Error::DegenerateEnsemble(m) => Error::DegenerateEnsemble(format!("time {n}: {m}")),
            other => other,
        })?;

        let final_ess = self.ens.ess()?;
        let final_resampled = final_ess <= self.cfg.n_star;
        if final_resampled {
            let mut rng = stream(self.seed, &[n as u64, tag::RESAMPLE, u64::MAX]);
            let anc = self.cfg.scheme.resample(&mut rng, &self.ens.weights())?;
            self.ens.reindex(&anc);
        }

        // Slide: keep the anchor at b_final - 1 and the blocks after it.
        let drop = (b_final - self.start) * d;
        if drop > 0 {
            for p in &mut self.ens.particles {
                p.data.drain(..drop);
            }
        }
        self.start = b_final;
        self.last_obs = n;
        let start = self.start;
        self.mus.retain(|&t, _| t >= start);
        self.ys.retain(|&t, _| t >= start);

        diag.temperatures = sd.schedule.len();
        diag.phis = sd.schedule.phis;
        diag.ess = sd.ess;
        diag.resampled = sd.resampled;
        diag.acceptance = sd.acceptance;
        diag.log_incr_var = sd.log_incr_var;
        diag.final_ess = final_ess;
        diag.final_resampled = final_resampled;
        diag.rwm_multiplier = self.multiplier;
        diag.window_blocks = self.window_blocks();
        diag.wall_ms = clock.elapsed().as_secs_f64() * 1e3;
        Ok(diag)
    }
}

/// `sum_i W_i phi(x_n^(i))` over the newest window block.
pub fn filter_estimate<F>(ens: &WeightedEnsemble<WindowParticle>, d: usize, phi: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let w = ens.weights();
    let mut out: Vec<f64> = Vec::new();
    for (wi, p) in w.iter().zip(&ens.particles) {
        let v = phi(p.newest(d));
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        check_len("estimate", &v, out.len())?;
        for (o, x) in out.iter_mut().zip(&v) {
            *o += wi * x;
        }
    }
    Ok(out)
}

/// Filter means `E[x_n | y_{1:n}]` for `n = 0..=T` plus per-step
/// diagnostics. `obs[n]` holds `y_n` (`obs[0]` is ignored).
pub fn run_lagged_filter<M: StateSpaceModel>(
    model: &M,
    cfg: LaggedConfig,
    mu: Box<dyn PredictorSource>,
    obs: &[Option<Vec<f64>>],
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<StepDiagnostics>)> {
    let mut filter = LaggedFilter::new(model, cfg, mu, seed)?;
    let mut means = vec![model.x0().to_vec()];
    let mut diags = Vec::with_capacity(obs.len().saturating_sub(1));
    for y in obs.iter().skip(1) {
        diags.push(filter.step(y.as_deref())?);
        means.push(filter.filter_mean()?);
    }
    Ok((means, diags))
}
