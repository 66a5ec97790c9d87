use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;

use super::LN_2PI;
use crate::error::{Error, Result};

/// Gaussian noise covariance, specified through a symmetric square root.
///
/// The diagonal form covers every experiment model; the dense form is
/// accepted for completeness and goes through a Cholesky factorization.
#[derive(Debug, Clone)]
pub enum NoiseCov {
    /// Diagonal square root: `R^{1/2} = diag(s)`.
    Diagonal {
        sqrt: Vec<f64>,
        inv_sqrt: Vec<f64>,
        log_det: f64,
    },
    Dense {
        sqrt: DMatrix<f64>,
        chol: Cholesky<f64, Dyn>,
        log_det: f64,
    },
}

impl NoiseCov {
    /// `R^{1/2} = s I_d`.
    pub fn scalar(d: usize, s: f64) -> Result<Self> {
        Self::diagonal(vec![s; d])
    }

    pub fn diagonal(sqrt: Vec<f64>) -> Result<Self> {
        if sqrt.is_empty() {
            return Err(Error::InvalidParameter("empty noise covariance".into()));
        }
        if let Some(bad) = sqrt.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "noise square root must have positive entries, found {bad}"
            )));
        }
        let inv_sqrt = sqrt.iter().map(|s| 1.0 / s).collect();
        let log_det = 2.0 * sqrt.iter().map(|s| s.ln()).sum::<f64>();
        Ok(NoiseCov::Diagonal {
            sqrt,
            inv_sqrt,
            log_det,
        })
    }

    /// Dense symmetric positive-definite square root. Slow path.
    pub fn dense(sqrt: DMatrix<f64>) -> Result<Self> {
        if !sqrt.is_square() || sqrt.nrows() == 0 {
            return Err(Error::InvalidParameter("noise square root must be square".into()));
        }
        let asym = (&sqrt - sqrt.transpose()).amax();
        if asym > 1e-10 * sqrt.amax().max(1.0) {
            return Err(Error::InvalidParameter("noise square root must be symmetric".into()));
        }
        let eig = sqrt.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidParameter(
                "noise square root must be positive definite".into(),
            ));
        }
        let cov = &sqrt * &sqrt;
        let chol = Cholesky::new(cov)
            .ok_or_else(|| Error::Numerical("Cholesky of noise covariance failed".into()))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(NoiseCov::Dense {
            sqrt,
            chol,
            log_det,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseCov::Diagonal { sqrt, .. } => sqrt.len(),
            NoiseCov::Dense { sqrt, .. } => sqrt.nrows(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self, NoiseCov::Diagonal { .. })
    }

    /// Diagonal of the covariance `R`.
    pub fn variances(&self) -> Vec<f64> {
        match self {
            NoiseCov::Diagonal { sqrt, .. } => sqrt.iter().map(|s| s * s).collect(),
            NoiseCov::Dense { .. } => self.covariance().diagonal().iter().copied().collect(),
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            NoiseCov::Diagonal { sqrt, .. } => {
                DMatrix::from_diagonal(&DVector::from_iterator(sqrt.len(), sqrt.iter().map(|s| s * s)))
            }
            NoiseCov::Dense { sqrt, .. } => sqrt * sqrt,
        }
    }

    pub fn log_det(&self) -> f64 {
        match self {
            NoiseCov::Diagonal { log_det, .. } | NoiseCov::Dense { log_det, .. } => *log_det,
        }
    }

    /// `r^T R^{-1} r`.
    pub fn mahalanobis(&self, r: &[f64]) -> f64 {
        match self {
            NoiseCov::Diagonal { inv_sqrt, .. } => r
                .iter()
                .zip(inv_sqrt)
                .map(|(ri, si)| {
                    let z = ri * si;
                    z * z
                })
                .sum(),
            NoiseCov::Dense { chol, .. } => {
                let z = self.whiten_dense(chol, r);
                z.norm_squared()
            }
        }
    }

    /// `log N(r; 0, R)`.
    pub fn logpdf_residual(&self, r: &[f64]) -> f64 {
        -0.5 * (r.len() as f64 * LN_2PI + self.log_det() + self.mahalanobis(r))
    }

    /// Adds `R^{1/2} w`, `w ~ N(0, I)`, in place.
    pub fn add_noise<R: Rng + ?Sized>(&self, rng: &mut R, x: &mut [f64]) {
        match self {
            NoiseCov::Diagonal { sqrt, .. } => {
                for (xi, si) in x.iter_mut().zip(sqrt) {
                    let w: f64 = rng.sample(StandardNormal);
                    *xi += si * w;
                }
            }
            NoiseCov::Dense { sqrt, .. } => {
                let w = DVector::from_iterator(x.len(), (0..x.len()).map(|_| rng.sample(StandardNormal)));
                let e = sqrt * w;
                for (xi, ei) in x.iter_mut().zip(e.iter()) {
                    *xi += ei;
                }
            }
        }
    }

    /// Applies a whitening factor `L^{-1}` with `L L^T = R`.
    pub fn whiten(&self, r: &[f64]) -> Vec<f64> {
        match self {
            NoiseCov::Diagonal { sqrt, .. } => r.iter().zip(sqrt).map(|(a, s)| a / s).collect(),
            NoiseCov::Dense { chol, .. } => self.whiten_dense(chol, r).iter().copied().collect(),
        }
    }

    /// Applies the factor `L` matching [`NoiseCov::whiten`].
    pub fn color(&self, w: &[f64]) -> Vec<f64> {
        match self {
            NoiseCov::Diagonal { sqrt, .. } => w.iter().zip(sqrt).map(|(a, s)| a * s).collect(),
            NoiseCov::Dense { chol, .. } => {
                let v = chol.l() * DVector::from_column_slice(w);
                v.iter().copied().collect()
            }
        }
    }

    fn whiten_dense(&self, chol: &Cholesky<f64, Dyn>, r: &[f64]) -> DVector<f64> {
        let l = chol.l_dirty();
        l.solve_lower_triangular(&DVector::from_column_slice(r))
            .expect("Cholesky factor has a positive diagonal")
    }
}
