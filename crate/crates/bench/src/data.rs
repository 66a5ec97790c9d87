//! Model construction and synthetic twin data.

use std::sync::Arc;

use lagpf::model::factorized::FactorizedSsm;
use lagpf::models::lorenz96::perturbed_equilibrium;
use lagpf::models::{linear_gaussian_model, lorenz96_model, swe_model, IdentityDrift, SweParams};
use lagpf::rng::{stream, tag};
use lagpf::{NoiseCov, ObsOperator, SsmDefinition, StateSpaceModel};

use crate::config::ModelSpec;
use crate::error::Result;

/// A model built from a [`ModelSpec`].
#[derive(Debug, Clone)]
pub enum BuiltModel {
    Gaussian(SsmDefinition),
    Factorized(FactorizedSsm),
}

impl BuiltModel {
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        let m = match *spec {
            ModelSpec::LinearGaussian {
                d,
                r1_sqrt,
                r2_sqrt,
                x0,
                obs_frequency,
            } => {
                if obs_frequency == 1 {
                    BuiltModel::Gaussian(linear_gaussian_model(d, r1_sqrt, r2_sqrt, vec![x0; d])?)
                } else {
                    BuiltModel::Gaussian(SsmDefinition::new(
                        Arc::new(IdentityDrift::new(d)),
                        NoiseCov::scalar(d, r1_sqrt)?,
                        NoiseCov::scalar(d, r2_sqrt)?,
                        ObsOperator::Identity(d),
                        obs_frequency,
                        vec![x0; d],
                    )?)
                }
            }
            ModelSpec::Lorenz96 {
                d,
                dt,
                r1_sqrt,
                r2_sqrt,
                obs_frequency,
                perturbed,
                perturbation,
            } => BuiltModel::Gaussian(lorenz96_model(
                d,
                dt,
                r1_sqrt,
                r2_sqrt,
                obs_frequency,
                perturbed_equilibrium(d, perturbed, perturbation),
            )?),
            ModelSpec::ShallowWater {
                d_g,
                a,
                g,
                cfl,
                r1_sqrt,
                r2_sqrt,
            } => BuiltModel::Gaussian(swe_model(SweParams { d_g, a, g, cfl }, r1_sqrt, r2_sqrt)?),
            ModelSpec::Factorized {
                d,
                m,
                rho,
                sigma,
                tau,
                coupling,
                x0,
            } => BuiltModel::Factorized(FactorizedSsm::new(d, m, rho, sigma, tau, coupling, x0)?),
        };
        Ok(m)
    }

    pub fn gaussian(&self) -> Option<&SsmDefinition> {
        match self {
            BuiltModel::Gaussian(m) => Some(m),
            BuiltModel::Factorized(_) => None,
        }
    }

    pub fn dim_x(&self) -> usize {
        match self {
            BuiltModel::Gaussian(m) => m.dim_x(),
            BuiltModel::Factorized(m) => m.dim_x(),
        }
    }

    pub fn dim_y(&self) -> usize {
        match self {
            BuiltModel::Gaussian(m) => m.dim_y(),
            BuiltModel::Factorized(m) => m.dim_y(),
        }
    }
}

/// Truth `x_{0:T}` and observations; `obs[n]` is `Some(y_n)` exactly at
/// observed times and `obs[0]` is always `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinData {
    pub truth: Vec<Vec<f64>>,
    pub obs: Vec<Option<Vec<f64>>>,
}

impl TwinData {
    pub fn steps(&self) -> usize {
        self.truth.len() - 1
    }

    pub fn observation_count(&self) -> usize {
        self.obs.iter().filter(|y| y.is_some()).count()
    }
}

/// Simulates the signal from `x_0` and observes it every k̂ steps.
/// Step `n` draws from its own stream, so a prefix of a longer run equals a
/// shorter run with the same seed.
pub fn generate_twin_data<M: StateSpaceModel>(model: &M, steps: usize, seed: u64) -> Result<TwinData> {
    let mut truth = Vec::with_capacity(steps + 1);
    let mut obs = Vec::with_capacity(steps + 1);
    truth.push(model.x0().to_vec());
    obs.push(None);
    for n in 1..=steps {
        let mut rng = stream(seed, &[tag::TRUTH, n as u64]);
        let x = model.sample_transition(n, &mut rng, &truth[n - 1])?;
        obs.push(if model.is_observed(n) {
            let mut rng = stream(seed, &[tag::TRUTH, n as u64, 1]);
            Some(model.sample_observation(&mut rng, &x)?)
        } else {
            None
        });
        truth.push(x);
    }
    Ok(TwinData { truth, obs })
}

/// Twin data for a built model.
pub fn generate_for(model: &BuiltModel, steps: usize, seed: u64) -> Result<TwinData> {
    match model {
        BuiltModel::Gaussian(m) => generate_twin_data(m, steps, seed),
        BuiltModel::Factorized(m) => generate_twin_data(m, steps, seed),
    }
}
