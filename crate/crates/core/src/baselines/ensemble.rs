use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{SsmDefinition, StateSpaceModel};
use crate::rng::{stream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    /// Stochastic EnKF with perturbed observations.
    Enkf,
    /// Triangular transform `L^{-T}` with `L L^T = I + Ỹ^T Ỹ`.
    Etkf,
    /// Symmetric square-root transform `U Λ^{-1/2} U^T`.
    EtkfSqrt,
}

impl EnsembleKind {
    pub fn name(self) -> &'static str {
        match self {
            EnsembleKind::Enkf => "enkf",
            EnsembleKind::Etkf => "etkf",
            EnsembleKind::EtkfSqrt => "etkf-sqrt",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    pub members: Vec<Vec<f64>>,
}

impl EnsembleState {
    pub fn new(members: Vec<Vec<f64>>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Contract(format!(
                "an ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let d = members[0].len();
        for m in &members {
            check_len("ensemble member", m, d)?;
        }
        Ok(Self { members })
    }

    /// `n_e` copies of `x0`.
    pub fn replicate(x0: &[f64], n_e: usize) -> Result<Self> {
        Self::new(vec![x0.to_vec(); n_e])
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].len()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for x in &self.members {
            for (a, b) in m.iter_mut().zip(x) {
                *a += b;
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Per-coordinate sample variance, divisor `N_e - 1`.
    pub fn variances(&self) -> Vec<f64> {
        let m = self.mean();
        let mut v = vec![0.0; self.dim()];
        for x in &self.members {
            for ((a, b), c) in v.iter_mut().zip(x).zip(&m) {
                *a += (b - c) * (b - c);
            }
        }
        let n = (self.len() - 1) as f64;
        v.iter_mut().for_each(|a| *a /= n);
        v
    }

    /// Sample covariance, divisor `N_e - 1`.
    pub fn covariance(&self) -> DMatrix<f64> {
        let xp = self.scaled_anomalies(&self.mean());
        &xp * xp.transpose()
    }

    /// `(X - mean) / sqrt(N_e - 1)`.
    fn scaled_anomalies(&self, mean: &[f64]) -> DMatrix<f64> {
        let s = ((self.len() - 1) as f64).sqrt();
        DMatrix::from_fn(self.dim(), self.len(), |i, j| (self.members[j][i] - mean[i]) / s)
    }
}

/// Pushes every member through the stochastic dynamics into time `step`.
pub fn ensemble_forecast(
    es: &EnsembleState,
    model: &SsmDefinition,
    step: usize,
    seed: u64,
) -> Result<EnsembleState> {
    let members = es
        .members
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            let mut rng = stream(seed, &[tag::ENSEMBLE, step as u64, j as u64]);
            model.sample_transition(step, &mut rng, x)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleState { members })
}

fn whiten_columns(model: &SsmDefinition, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        let col: Vec<f64> = m.column(j).iter().copied().collect();
        out.set_column(j, &DVector::from_vec(model.r2().whiten(&col)));
    }
    out
}

/// The triangular ETKF transform is formed explicitly in ensemble space.
pub const MAX_ETKF_MEMBERS: usize = 4000;

/// Analysis step of the requested variant. `step` only enters the stream
/// keys of the EnKF observation perturbations.
pub fn ensemble_analysis(
    kind: EnsembleKind,
    es: &EnsembleState,
    y: &[f64],
    model: &SsmDefinition,
    step: usize,
    seed: u64,
) -> Result<EnsembleState> {
    check_len("observation", y, model.dim_y())?;
    check_len("ensemble member", &es.members[0], model.dim_x())?;
    let n_e = es.len();
    let mean = es.mean();
    let xp = es.scaled_anomalies(&mean);
    let yt = whiten_columns(model, &model.obs().apply_matrix(&xp));

    // Thin SVD Ỹ = V Σ W^T. With D = I + Σ², A = I + Ỹ^T Ỹ = I + W (D - I) W^T.
    let svd = yt.clone().svd(true, true);
    let v = svd.u.as_ref().expect("requested U");
    let w = svd.v_t.as_ref().expect("requested V^T").transpose();
    let sig = &svd.singular_values;
    let smax = sig.iter().fold(0.0f64, |m, s| m.max(*s));
    let cond = 1.0 + smax * smax;
    if !(cond.is_finite() && cond < 1e14) {
        return Err(Error::Numerical(format!(
            "ensemble transform is rank deficient (condition number {cond:e})"
        )));
    }
    let scale_cols = |m: &DMatrix<f64>, f: &dyn Fn(f64) -> f64| {
        let mut m = m.clone();
        for (j, s) in sig.iter().enumerate() {
            m.column_mut(j).scale_mut(f(*s));
        }
        m
    };
    // A^{-1} Ỹ^T = W diag(σ / (1 + σ²)) V^T.
    let xw = &xp * &w;
    let gain_ens = scale_cols(&xw, &|s| s / (1.0 + s * s)) * v.transpose();

    let members = match kind {
        EnsembleKind::Enkf => {
            let mut out = Vec::with_capacity(n_e);
            for (j, x) in es.members.iter().enumerate() {
                let mut rng = stream(seed, &[tag::OBSERVE, step as u64, j as u64]);
                let mut yj = y.to_vec();
                model.r2().add_noise(&mut rng, &mut yj);
                let hx = model.obs().apply(x);
                let r: Vec<f64> = yj.iter().zip(&hx).map(|(a, b)| a - b).collect();
                let dx = &gain_ens * DVector::from_vec(model.r2().whiten(&r));
                out.push(x.iter().zip(dx.iter()).map(|(a, b)| a + b).collect());
            }
            out
        }
        EnsembleKind::Etkf | EnsembleKind::EtkfSqrt => {
            let hm = model.obs().apply(&mean);
            let innov: Vec<f64> = y.iter().zip(&hm).map(|(a, b)| a - b).collect();
            let mean_a =
                DVector::from_vec(mean) + &gain_ens * DVector::from_vec(model.r2().whiten(&innov));
            let mut xa = if kind == EnsembleKind::EtkfSqrt {
                // Symmetric root A^{-1/2} = I + W (D^{-1/2} - I) W^T.
                &xp + scale_cols(&xw, &|s| 1.0 / (1.0 + s * s).sqrt() - 1.0) * w.transpose()
            } else {
                // Triangular root T = L^{-T}, A = L L^T, so T T^T = A^{-1}.
                if n_e > MAX_ETKF_MEMBERS {
                    return Err(Error::Unsupported(format!(
                        "triangular ETKF transform limited to {MAX_ETKF_MEMBERS} members, got {n_e}"
                    )));
                }
                let a = DMatrix::identity(n_e, n_e) + yt.transpose() * &yt;
                let l = a
                    .cholesky()
                    .ok_or_else(|| Error::Numerical("ETKF transform matrix is not positive definite".into()))?
                    .unpack();
                let t = l
                    .transpose()
                    .solve_upper_triangular(&DMatrix::identity(n_e, n_e))
                    .ok_or_else(|| Error::Numerical("singular ETKF transform".into()))?;
                &xp * t
            };
            xa *= ((n_e - 1) as f64).sqrt();
            (0..n_e)
                .map(|j| (&mean_a + xa.column(j)).iter().copied().collect())
                .collect()
        }
    };
    Ok(EnsembleState { members })
}

fn step_with(
    kind: EnsembleKind,
    es: &EnsembleState,
    step: usize,
    y: Option<&[f64]>,
    model: &SsmDefinition,
    seed: u64,
) -> Result<EnsembleState> {
    let fc = ensemble_forecast(es, model, step, seed)?;
    match y {
        Some(y) => ensemble_analysis(kind, &fc, y, model, step, seed),
        None => Ok(fc),
    }
}

pub fn enkf_step(
    es: &EnsembleState,
    step: usize,
    y: Option<&[f64]>,
    model: &SsmDefinition,
    seed: u64,
) -> Result<EnsembleState> {
    step_with(EnsembleKind::Enkf, es, step, y, model, seed)
}

pub fn etkf_step(
    es: &EnsembleState,
    step: usize,
    y: Option<&[f64]>,
    model: &SsmDefinition,
    seed: u64,
) -> Result<EnsembleState> {
    step_with(EnsembleKind::Etkf, es, step, y, model, seed)
}

pub fn etkf_sqrt_step(
    es: &EnsembleState,
    step: usize,
    y: Option<&[f64]>,
    model: &SsmDefinition,
    seed: u64,
) -> Result<EnsembleState> {
    step_with(EnsembleKind::EtkfSqrt, es, step, y, model, seed)
}
