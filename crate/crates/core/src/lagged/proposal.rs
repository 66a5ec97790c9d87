//! Gaussian densities `mu` standing in for the one-step predictive law at
//! the start of the lag window, and the trackers that produce them.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::baselines::{ensemble_analysis, ensemble_forecast, kalman_predict, kalman_update};
use crate::baselines::{EnsembleKind, EnsembleState, KalmanState};
use crate::error::{check_len, Error, Result};
use crate::model::{SsmDefinition, StateSpaceModel, LN_2PI};
use crate::rng::{stream_key, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MuSource {
    Transition,
    KalmanPredictor,
    EtkfSqrtPredictor,
}

#[derive(Debug, Clone)]
pub enum MuCov {
    Diagonal { var: Vec<f64>, log_det: f64 },
    Dense { chol: Cholesky<f64, Dyn>, log_det: f64 },
}

/// Gaussian `N(mean, cov)` on the state space.
#[derive(Debug, Clone)]
pub struct ProposalMu {
    pub mean: Vec<f64>,
    pub cov: MuCov,
    pub source: MuSource,
}

impl ProposalMu {
    pub fn diagonal(mean: Vec<f64>, var: Vec<f64>, source: MuSource) -> Result<Self> {
        check_len("mu variance", &var, mean.len())?;
        if let Some((i, v)) = var.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::Contract(format!("mu variance entry {i} is not positive ({v})")));
        }
        Ok(Self {
            mean,
            cov: MuCov::Diagonal {
                log_det: var.iter().map(|v| v.ln()).sum(),
                var,
            },
            source,
        })
    }

    pub fn dense(mean: Vec<f64>, cov: DMatrix<f64>, source: MuSource) -> Result<Self> {
        if cov.nrows() != mean.len() || !cov.is_square() {
            return Err(Error::dim("mu covariance", mean.len(), cov.nrows()));
        }
        if let Some(i) = (0..mean.len()).find(|&i| !(cov[(i, i)] > 0.0)) {
            return Err(Error::Contract(format!("mu covariance diagonal entry {i} is not positive")));
        }
        let chol = Cholesky::new(cov)
            .ok_or_else(|| Error::Contract("mu covariance is not positive definite".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self {
            mean,
            cov: MuCov::Dense { chol, log_det },
            source,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variances(&self) -> Vec<f64> {
        match &self.cov {
            MuCov::Diagonal { var, .. } => var.clone(),
            MuCov::Dense { chol, .. } => {
                let l = chol.l();
                (0..self.dim()).map(|i| l.row(i).norm_squared()).collect()
            }
        }
    }

    pub fn logpdf(&self, x: &[f64]) -> f64 {
        match &self.cov {
            MuCov::Diagonal { var, log_det } => {
                let q: f64 = x
                    .iter()
                    .zip(&self.mean)
                    .zip(var)
                    .map(|((a, m), v)| (a - m) * (a - m) / v)
                    .sum();
                -0.5 * (x.len() as f64 * LN_2PI + log_det + q)
            }
            MuCov::Dense { chol, log_det } => {
                let r = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, m)| a - m));
                let z = chol
                    .l_dirty()
                    .solve_lower_triangular(&r)
                    .expect("Cholesky factor has a positive diagonal");
                -0.5 * (x.len() as f64 * LN_2PI + log_det + z.norm_squared())
            }
        }
    }
}

/// Gaussian `mu` from Kalman predictor moments. With `diagonal` set only the
/// diagonal of `cov` is kept. `cov_scale` multiplies the covariance.
pub fn mu_from_kalman_predictor(
    mean: &[f64],
    cov: &DMatrix<f64>,
    diagonal: bool,
    cov_scale: f64,
) -> Result<ProposalMu> {
    if diagonal {
        let var = cov.diagonal().iter().map(|v| v * cov_scale).collect();
        ProposalMu::diagonal(mean.to_vec(), var, MuSource::KalmanPredictor)
    } else {
        ProposalMu::dense(mean.to_vec(), cov * cov_scale, MuSource::KalmanPredictor)
    }
}

/// Diagonal Gaussian `mu` with the forecast ensemble's mean and unbiased
/// per-coordinate variance. Variances below `floor` are raised to it; the
/// number of raised coordinates is returned alongside.
pub fn mu_from_etkf_sqrt_predictor(
    forecast: &EnsembleState,
    floor: f64,
    cov_scale: f64,
) -> Result<(ProposalMu, usize)> {
    if forecast.len() < 2 {
        return Err(Error::Contract("ETKF-SQRT predictor needs at least 2 members".into()));
    }
    let mut floored = 0;
    let var = forecast
        .variances()
        .into_iter()
        .map(|v| {
            let v = v * cov_scale;
            if v < floor {
                floored += 1;
                floor
            } else {
                v
            }
        })
        .collect();
    let mu = ProposalMu::diagonal(forecast.mean(), var, MuSource::EtkfSqrtPredictor)?;
    Ok((mu, floored))
}

/// How `mu` is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MuConfig {
    /// `mu_{n-L} = f(x_{n-L}, .)`: the filter targets the exact smoother.
    Transition,
    KalmanPredictor {
        #[serde(default)]
        diagonal: bool,
        #[serde(default = "one")]
        cov_scale: f64,
    },
    EtkfSqrtPredictor {
        members: usize,
        #[serde(default = "default_floor")]
        var_floor: f64,
        #[serde(default = "one")]
        cov_scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn default_floor() -> f64 {
    1e-8
}

impl MuConfig {
    pub fn source(&self) -> MuSource {
        match self {
            MuConfig::Transition => MuSource::Transition,
            MuConfig::KalmanPredictor { .. } => MuSource::KalmanPredictor,
            MuConfig::EtkfSqrtPredictor { .. } => MuSource::EtkfSqrtPredictor,
        }
    }

    /// Builds the tracker. Predictor sources need the Gaussian model.
    pub fn tracker(&self, model: Option<&SsmDefinition>, seed: u64) -> Result<Box<dyn PredictorSource>> {
        let need = || {
            model.cloned().ok_or_else(|| {
                Error::Unsupported("predictor-based mu needs a Gaussian state-space model".into())
            })
        };
        Ok(match *self {
            MuConfig::Transition => Box::new(TransitionSource),
            MuConfig::KalmanPredictor { diagonal, cov_scale } => {
                let model = need()?;
                let state = KalmanState::point(model.x0())?;
                Box::new(KalmanSource {
                    model,
                    state,
                    diagonal,
                    cov_scale,
                })
            }
            MuConfig::EtkfSqrtPredictor {
                members,
                var_floor,
                cov_scale,
            } => {
                let model = need()?;
                let ens = EnsembleState::replicate(model.x0(), members)?;
                Box::new(EtkfSqrtSource {
                    model,
                    ens,
                    seed: stream_key(seed, &[tag::PREDICTOR]),
                    var_floor,
                    cov_scale,
                    floored: 0,
                })
            }
        })
    }
}

/// Runs alongside the particle filter and hands out `mu` for each new state.
pub trait PredictorSource: Send {
    /// Called once per time step `n >= 1`: returns the density of `x_n`
    /// given `y_{1:n-1}` (`None` for the transition density), then
    /// assimilates `y_n` if present.
    fn advance(&mut self, n: usize, y: Option<&[f64]>) -> Result<Option<ProposalMu>>;

    /// Coordinates whose variance was floored so far.
    fn floor_events(&self) -> usize {
        0
    }
}

pub struct TransitionSource;

impl PredictorSource for TransitionSource {
    fn advance(&mut self, _n: usize, _y: Option<&[f64]>) -> Result<Option<ProposalMu>> {
        Ok(None)
    }
}

pub struct KalmanSource {
    model: SsmDefinition,
    state: KalmanState,
    diagonal: bool,
    cov_scale: f64,
}

impl PredictorSource for KalmanSource {
    fn advance(&mut self, _n: usize, y: Option<&[f64]>) -> Result<Option<ProposalMu>> {
        let pred = kalman_predict(&self.state, &self.model)?;
        let mu = mu_from_kalman_predictor(pred.mean.as_slice(), &pred.cov, self.diagonal, self.cov_scale)?;
        self.state = match y {
            Some(y) => kalman_update(&pred, y, &self.model)?,
            None => pred,
        };
        Ok(Some(mu))
    }
}

pub struct EtkfSqrtSource {
    model: SsmDefinition,
    ens: EnsembleState,
    seed: u64,
    var_floor: f64,
    cov_scale: f64,
    floored: usize,
}

impl PredictorSource for EtkfSqrtSource {
    fn advance(&mut self, n: usize, y: Option<&[f64]>) -> Result<Option<ProposalMu>> {
        let fc = ensemble_forecast(&self.ens, &self.model, n, self.seed)?;
        let (mu, floored) = mu_from_etkf_sqrt_predictor(&fc, self.var_floor, self.cov_scale)?;
        self.floored += floored;
        self.ens = match y {
            Some(y) => ensemble_analysis(EnsembleKind::EtkfSqrt, &fc, y, &self.model, n, self.seed)?,
            None => fc,
        };
        Ok(Some(mu))
    }

    fn floor_events(&self) -> usize {
        self.floored
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::linear::linear_gaussian_model;
    use approx::assert_abs_diff_eq;

    #[test]
    fn standard_normal_at_origin() {
        let d = 4;
        let mu = mu_from_kalman_predictor(&[0.0; 4], &DMatrix::identity(d, d), false, 1.0).unwrap();
        assert_abs_diff_eq!(mu.logpdf(&[0.0; 4]), -0.5 * d as f64 * LN_2PI, epsilon = 1e-14);
        let diag = mu_from_kalman_predictor(&[0.0; 4], &DMatrix::identity(d, d), true, 1.0).unwrap();
        assert_abs_diff_eq!(diag.logpdf(&[0.3, 0.1, 0.0, -2.0]), mu.logpdf(&[0.3, 0.1, 0.0, -2.0]), epsilon = 1e-13);
    }

    #[test]
    fn diagonal_extraction_keeps_diagonal() {
        let cov = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 3.0]);
        let mu = mu_from_kalman_predictor(&[0.0, 0.0], &cov, true, 1.0).unwrap();
        assert_eq!(mu.variances(), vec![2.0, 3.0]);
        let dense = mu_from_kalman_predictor(&[0.0, 0.0], &cov, false, 1.0).unwrap();
        let v = dense.variances();
        assert_abs_diff_eq!(v[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(v[1], 3.0, epsilon = 1e-14);
        // Correlated density against the closed form.
        let x = [0.4, -0.2];
        let det = 2.0 * 3.0 - 0.25;
        let q = (3.0 * x[0] * x[0] - 2.0 * 0.5 * x[0] * x[1] + 2.0 * x[1] * x[1]) / det;
        assert_abs_diff_eq!(dense.logpdf(&x), -LN_2PI - 0.5 * det.ln() - 0.5 * q, epsilon = 1e-13);
    }

    #[test]
    fn non_positive_variance_is_a_contract_violation() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            mu_from_kalman_predictor(&[0.0, 0.0], &cov, true, 1.0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn kalman_tracker_first_predictor_is_prior_plus_noise() {
        // Identity dynamics from a point mass: x_1 ~ N(x0, R1).
        let model = linear_gaussian_model(1, 0.8, 0.5, vec![1.5]).unwrap();
        let mut src = MuConfig::KalmanPredictor {
            diagonal: true,
            cov_scale: 1.0,
        }
        .tracker(Some(&model), 0)
        .unwrap();
        let mu = src.advance(1, Some(&[2.0])).unwrap().unwrap();
        assert_eq!(mu.mean, vec![1.5]);
        assert_abs_diff_eq!(mu.variances()[0], 0.64, epsilon = 1e-14);
        // Second predictor: posterior of step 1 plus R1.
        let mu2 = src.advance(2, None).unwrap().unwrap();
        let (p, r) = (0.64, 0.25);
        let post_var = p * r / (p + r);
        let post_mean = 1.5 + p / (p + r) * (2.0 - 1.5);
        assert_abs_diff_eq!(mu2.mean[0], post_mean, epsilon = 1e-14);
        assert_abs_diff_eq!(mu2.variances()[0], post_var + 0.64, epsilon = 1e-14);
    }

    #[test]
    fn ensemble_predictor_moments() {
        let es = EnsembleState::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        let (mu, floored) = mu_from_etkf_sqrt_predictor(&es, 1e-8, 1.0).unwrap();
        assert_eq!((mu.mean[0], mu.variances()[0], floored), (0.0, 2.0, 0));

        let shifted = EnsembleState::new(vec![vec![2.0], vec![4.0]]).unwrap();
        let (mu_s, _) = mu_from_etkf_sqrt_predictor(&shifted, 1e-8, 1.0).unwrap();
        assert_eq!((mu_s.mean[0], mu_s.variances()[0]), (3.0, 2.0));

        let same = EnsembleState::new(vec![vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let (mu_d, floored) = mu_from_etkf_sqrt_predictor(&same, 1e-8, 1.0).unwrap();
        assert_eq!(floored, 2);
        assert_eq!(mu_d.variances(), vec![1e-8, 1e-8]);
    }

    #[test]
    fn predictor_sources_need_a_gaussian_model() {
        let cfg = MuConfig::EtkfSqrtPredictor {
            members: 4,
            var_floor: 1e-8,
            cov_scale: 1.0,
        };
        assert!(matches!(cfg.tracker(None, 0), Err(Error::Unsupported(_))));
        assert!(MuConfig::Transition.tracker(None, 0).is_ok());
    }
}
