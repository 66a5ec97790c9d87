//! Generic tempered SMC sampler.
//!
//! Moves an ensemble from an initial density `nu` to a target `kappa` through
//! the bridge `kappa^phi nu^(1-phi)`. Weights are updated by
//! `(kappa / nu)^(phi_{k+1} - phi_k)` and normalized after every update;
//! the ensemble is resampled whenever `ESS <= N*`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::resample::ResampleScheme;
use super::temper::{solve_temper_increment, TemperMode, TemperSchedule};
use super::weights::{ess, normalize_log_weights, WeightedEnsemble};
use crate::error::{Error, Result};
use crate::rng::{stream, tag};

/// Markov kernel family indexed by temperature.
///
/// `apply` must leave the bridge density at `phi` invariant. `stage` counts
/// tempering steps within the pass and is meant for stream derivation.
pub trait TemperedKernel<P> {
    fn apply(&mut self, phi: f64, stage: usize, particles: &mut [P]) -> Result<KernelStats>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KernelStats {
    /// Mean acceptance over particles and sweeps.
    pub acceptance: f64,
    pub sweeps: usize,
}

#[derive(Debug, Clone)]
pub struct TemperingOptions {
    pub mode: TemperMode,
    pub n_star: f64,
    pub initial_phi: f64,
    pub scheme: ResampleScheme,
    pub seed: u64,
    /// Counters identifying this pass (e.g. the time step); prefixed to every
    /// stream key the sampler derives.
    pub stream_prefix: Vec<u64>,
    pub max_steps: usize,
    /// Adaptive increments below this are raised to it.
    pub min_increment: f64,
}

impl Default for TemperingOptions {
    fn default() -> Self {
        Self {
            mode: TemperMode::Adaptive,
            n_star: 1.0,
            initial_phi: 0.0,
            scheme: ResampleScheme::Systematic,
            seed: 0,
            stream_prefix: Vec::new(),
            max_steps: 100_000,
            min_increment: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub schedule: TemperSchedule,
    /// ESS right after each weight update (before any resampling). The first
    /// entry belongs to the initial temperature.
    pub ess: Vec<f64>,
    pub resampled: Vec<bool>,
    pub acceptance: Vec<f64>,
    /// Variance over particles of the log incremental weight applied at each update.
    pub log_incr_var: Vec<f64>,
    pub raised_increments: usize,
}

impl SamplerDiagnostics {
    pub fn temperatures(&self) -> usize {
        self.schedule.len()
    }
}

fn finite_variance(v: impl Iterator<Item = f64>) -> f64 {
    let vals: Vec<f64> = v.filter(|x| x.is_finite()).collect();
    if vals.len() < 2 {
        return 0.0;
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (vals.len() - 1) as f64
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() || v == f64::INFINITY {
        f64::NEG_INFINITY
    } else {
        v
    }
}

fn maybe_resample<P: Clone>(
    ens: &mut WeightedEnsemble<P>,
    log_ratio: &mut Vec<f64>,
    opts: &TemperingOptions,
    stage: usize,
) -> Result<(f64, bool)> {
    let e = ess(&ens.log_weights)?;
    if e > opts.n_star {
        return Ok((e, false));
    }
    let mut key = opts.stream_prefix.clone();
    key.extend([tag::RESAMPLE, stage as u64]);
    let mut rng = stream(opts.seed, &key);
    let w = ens.weights();
    let anc = opts.scheme.resample(&mut rng, &w)?;
    *log_ratio = anc.iter().map(|&a| log_ratio[a]).collect();
    ens.reindex(&anc);
    Ok((e, true))
}

/// Runs one tempering pass from `phi = initial_phi` to `phi = 1`.
///
/// `log_ratio(p)` is `log kappa(p) - log nu(p)`. The ensemble's incoming
/// log-weights are kept (they need not be uniform) and are normalized on
/// return.
pub fn run_tempering<P, F, K>(
    ens: &mut WeightedEnsemble<P>,
    log_ratio: F,
    kernel: &mut K,
    opts: &TemperingOptions,
) -> Result<SamplerDiagnostics>
where
    P: Clone + Send + Sync,
    F: Fn(&P) -> f64 + Sync,
    K: TemperedKernel<P> + ?Sized,
{
    if !(0.0..=1.0).contains(&opts.initial_phi) {
        return Err(Error::Contract(format!(
            "initial temperature must lie in [0, 1], got {}",
            opts.initial_phi
        )));
    }
    let n = ens.len();
    if !(1.0..=n as f64).contains(&opts.n_star) {
        return Err(Error::Contract(format!("N* must lie in [1, {n}], got {}", opts.n_star)));
    }
    let eval = |parts: &[P]| -> Vec<f64> { parts.par_iter().map(|p| sanitize(log_ratio(p))).collect() };

    let mut lambda = eval(&ens.particles);
    let mut phi = opts.initial_phi;
    if phi > 0.0 {
        for (w, l) in ens.log_weights.iter_mut().zip(&lambda) {
            *w += phi * l;
        }
    }
    normalize_log_weights(&mut ens.log_weights)?;

    let mut diag = SamplerDiagnostics {
        schedule: TemperSchedule::new(opts.mode, phi),
        ess: Vec::new(),
        resampled: Vec::new(),
        acceptance: Vec::new(),
        log_incr_var: Vec::new(),
        raised_increments: 0,
    };
    let (e0, r0) = maybe_resample(ens, &mut lambda, opts, 0)?;
    diag.ess.push(e0);
    diag.resampled.push(r0);

    let mut stage = 0usize;
    while phi < 1.0 {
        stage += 1;
        if stage > opts.max_steps {
            return Err(Error::DegenerateEnsemble(format!(
                "tempering did not reach phi = 1 within {} steps (phi = {phi})",
                opts.max_steps
            )));
        }
        let (mut delta, mut last) = match opts.mode {
            TemperMode::Adaptive => solve_temper_increment(&lambda, phi, &ens.log_weights, opts.n_star)?,
            TemperMode::Fixed { steps } => {
                let step = 1.0 / steps.max(1) as f64;
                if phi + step >= 1.0 - 1e-12 {
                    (1.0 - phi, true)
                } else {
                    (step, false)
                }
            }
        };
        if !last && delta < opts.min_increment {
            delta = opts.min_increment.min(1.0 - phi);
            last = phi + delta >= 1.0;
            diag.raised_increments += 1;
        }
        let next_phi = if last { 1.0 } else { phi + delta };

        diag.log_incr_var
            .push(finite_variance(lambda.iter().map(|l| delta * l)));
        for (w, l) in ens.log_weights.iter_mut().zip(&lambda) {
            *w += delta * l;
        }
        normalize_log_weights(&mut ens.log_weights)?;
        let (e, r) = maybe_resample(ens, &mut lambda, opts, stage)?;
        diag.ess.push(e);
        diag.resampled.push(r);

        let stats = kernel.apply(next_phi, stage, &mut ens.particles)?;
        diag.acceptance.push(stats.acceptance);
        phi = next_phi;
        diag.schedule.phis.push(phi);
        if phi < 1.0 {
            lambda = eval(&ens.particles);
        }
    }
    Ok(diag)
}

/// Tempered SMC sampler from `log_init` to `log_target`.
pub fn smc_sampler<P, T, I, K>(
    log_target: T,
    log_init: I,
    kernel: &mut K,
    opts: &TemperingOptions,
    mut ensemble: WeightedEnsemble<P>,
) -> Result<(WeightedEnsemble<P>, SamplerDiagnostics)>
where
    P: Clone + Send + Sync,
    T: Fn(&P) -> f64 + Sync,
    I: Fn(&P) -> f64 + Sync,
    K: TemperedKernel<P> + ?Sized,
{
    let diag = run_tempering(&mut ensemble, |p| log_target(p) - log_init(p), kernel, opts)?;
    Ok((ensemble, diag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::standard_normals;
    use crate::rng::stream;
    use rand::Rng;

    struct Identity;
    impl<P> TemperedKernel<P> for Identity {
        fn apply(&mut self, _phi: f64, _stage: usize, _p: &mut [P]) -> Result<KernelStats> {
            Ok(KernelStats {
                acceptance: 1.0,
                sweeps: 0,
            })
        }
    }

    /// Exact RWM on the 1-d bridge between N(0,1) and N(mu,1).
    struct GaussRwm {
        mu: f64,
        sweeps: usize,
        seed: u64,
    }
    impl TemperedKernel<f64> for GaussRwm {
        fn apply(&mut self, phi: f64, stage: usize, p: &mut [f64]) -> Result<KernelStats> {
            let target = |x: f64| -0.5 * (1.0 - phi) * x * x - 0.5 * phi * (x - self.mu).powi(2);
            let mut acc = 0usize;
            for (i, x) in p.iter_mut().enumerate() {
                let mut rng = stream(self.seed, &[stage as u64, i as u64]);
                for _ in 0..self.sweeps {
                    let prop = *x + 2.4 * rng.sample::<f64, _>(rand_distr::StandardNormal);
                    if rng.random::<f64>().ln() < target(prop) - target(*x) {
                        *x = prop;
                        acc += 1;
                    }
                }
            }
            Ok(KernelStats {
                acceptance: acc as f64 / (p.len() * self.sweeps) as f64,
                sweeps: self.sweeps,
            })
        }
    }

    #[test]
    fn identical_densities_are_a_no_op() {
        let parts = standard_normals(&mut stream(1, &[]), 100);
        let ens = WeightedEnsemble::uniform(parts.clone()).unwrap();
        let opts = TemperingOptions {
            n_star: 50.0,
            ..Default::default()
        };
        let log_n = |x: &f64| -0.5 * x * x;
        let (out, diag) = smc_sampler(log_n, log_n, &mut Identity, &opts, ens).unwrap();
        assert_eq!(out.particles, parts);
        assert!(diag.resampled.iter().all(|r| !r));
        assert_eq!(diag.schedule.phis, vec![0.0, 1.0]);
    }

    #[test]
    fn fixed_grid_uses_exactly_d_updates() {
        let d = 7;
        let parts = standard_normals(&mut stream(2, &[]), 50);
        let ens = WeightedEnsemble::uniform(parts).unwrap();
        let opts = TemperingOptions {
            mode: TemperMode::Fixed { steps: d },
            n_star: 1.0,
            ..Default::default()
        };
        let (_, diag) = smc_sampler(|x: &f64| -0.5 * (x - 1.0).powi(2), |x: &f64| -0.5 * x * x, &mut Identity, &opts, ens)
            .unwrap();
        assert_eq!(diag.log_incr_var.len(), d);
        assert_eq!(diag.schedule.len(), d + 1);
        for (k, phi) in diag.schedule.phis.iter().enumerate() {
            assert!((phi - k as f64 / d as f64).abs() < 1e-12);
        }
        assert!(diag.schedule.is_complete());
    }

    #[test]
    fn gaussian_shift_reaches_target_mean() {
        let n = 5000;
        let mu = 3.0;
        let parts = standard_normals(&mut stream(3, &[]), n);
        let ens = WeightedEnsemble::uniform(parts).unwrap();
        let opts = TemperingOptions {
            n_star: 0.5 * n as f64,
            seed: 3,
            ..Default::default()
        };
        let mut kernel = GaussRwm { mu, sweeps: 10, seed: 3 };
        let (out, diag) = smc_sampler(
            |x: &f64| -0.5 * (x - mu).powi(2),
            |x: &f64| -0.5 * x * x,
            &mut kernel,
            &opts,
            ens,
        )
        .unwrap();
        let w = out.weights();
        let mean: f64 = w.iter().zip(&out.particles).map(|(wi, x)| wi * x).sum();
        let ess_final = out.ess().unwrap();
        assert!((mean - mu).abs() < 3.0 / ess_final.sqrt(), "mean {mean}, ess {ess_final}");
        assert!(diag.schedule.is_complete());
        assert!(diag.temperatures() > 2);
    }

    #[test]
    fn resampling_equalizes_weights() {
        let parts: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let ens = WeightedEnsemble::uniform(parts).unwrap();
        let opts = TemperingOptions {
            n_star: 10.0,
            ..Default::default()
        };
        let (out, diag) = smc_sampler(|x: &f64| -x, |_: &f64| 0.0, &mut Identity, &opts, ens).unwrap();
        assert!(diag.resampled.iter().any(|&r| r));
        // Every recorded adaptive step lands on the threshold.
        for (e, r) in diag.ess.iter().zip(&diag.resampled).skip(1) {
            if *r {
                assert!((e - 10.0).abs() <= 1e-6 * 20.0 || *e <= 10.0);
            }
        }
        assert!(out.log_weights.iter().all(|w| w.is_finite()));
    }
}
