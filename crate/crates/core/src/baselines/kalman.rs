use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::model::{SsmDefinition, StateSpaceModel};

/// Dense covariances above this dimension are refused.
pub const MAX_KALMAN_DIM: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl KalmanState {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::dim("kalman covariance", d, cov.nrows()));
        }
        if d > MAX_KALMAN_DIM {
            return Err(Error::Unsupported(format!(
                "dense Kalman filter limited to d <= {MAX_KALMAN_DIM}, got {d}"
            )));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-10 * cov.amax().max(1.0) {
            return Err(Error::Contract("Kalman covariance is not symmetric".into()));
        }
        Ok(Self { mean, cov })
    }

    /// Point mass at `x0`.
    pub fn point(x0: &[f64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(x0), DMatrix::zeros(x0.len(), x0.len()))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn linear_map(model: &SsmDefinition) -> Result<Option<DMatrix<f64>>> {
    let a = model.drift().linear_map().ok_or_else(|| {
        Error::Unsupported(format!(
            "Kalman filter needs a linear drift, model uses '{}'",
            model.drift().name()
        ))
    })?;
    let d = a.nrows();
    if a == DMatrix::identity(d, d) {
        Ok(None)
    } else {
        Ok(Some(a))
    }
}

/// `m' = A m`, `P' = A P A^T + R1`.
pub fn kalman_predict(ks: &KalmanState, model: &SsmDefinition) -> Result<KalmanState> {
    if ks.dim() != model.dim_x() {
        return Err(Error::dim("kalman state", model.dim_x(), ks.dim()));
    }
    let (mean, mut cov) = match linear_map(model)? {
        None => (ks.mean.clone(), ks.cov.clone()),
        Some(a) => (&a * &ks.mean, &a * &ks.cov * a.transpose()),
    };
    cov += model.r1().covariance();
    symmetrize(&mut cov);
    Ok(KalmanState { mean, cov })
}

/// Gain-form update with the Joseph covariance expression.
pub fn kalman_update(ks: &KalmanState, y: &[f64], model: &SsmDefinition) -> Result<KalmanState> {
    check_len("observation", y, model.dim_y())?;
    linear_map(model)?;
    let d = ks.dim();
    let obs = model.obs();
    let r2 = model.r2().covariance();
    let c = obs.to_dense();
    let pct = &ks.cov * c.transpose();
    let mut s = obs.apply_matrix(&pct) + &r2;
    symmetrize(&mut s);
    let chol = Cholesky::new(s)
        .ok_or_else(|| Error::Numerical("innovation covariance is not positive definite".into()))?;
    // K = P C^T S^{-1}, solved as S K^T = C P.
    let gain = chol.solve(&pct.transpose()).transpose();
    let innov = DVector::from_column_slice(y) - DVector::from_vec(obs.apply(ks.mean.as_slice()));
    let mean = &ks.mean + &gain * innov;
    let ikc = DMatrix::identity(d, d) - &gain * &c;
    let mut cov = &ikc * &ks.cov * ikc.transpose() + &gain * r2 * gain.transpose();
    symmetrize(&mut cov);
    Ok(KalmanState { mean, cov })
}

/// Filtering means and predictor moments of a full Kalman pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KalmanRun {
    /// `E[x_n | y_{1:n}]`, `n = 0..=T`.
    pub filter_means: Vec<Vec<f64>>,
    /// `E[x_n | y_{1:n-1}]`, `n = 0..=T` (entry 0 is `x0`).
    pub predictor_means: Vec<Vec<f64>>,
    /// Diagonal of the predictor covariance.
    pub predictor_vars: Vec<Vec<f64>>,
}

/// Runs the Kalman filter from a point mass at `x0` over `obs[1..=T]`.
pub fn kalman_filter(model: &SsmDefinition, obs: &[Option<Vec<f64>>]) -> Result<KalmanRun> {
    let mut ks = KalmanState::point(model.x0())?;
    let mut run = KalmanRun {
        filter_means: vec![model.x0().to_vec()],
        predictor_means: vec![model.x0().to_vec()],
        predictor_vars: vec![vec![0.0; model.dim_x()]],
    };
    for y in obs.iter().skip(1) {
        ks = kalman_predict(&ks, model)?;
        run.predictor_means.push(ks.mean.as_slice().to_vec());
        run.predictor_vars.push(ks.cov.diagonal().as_slice().to_vec());
        if let Some(y) = y {
            ks = kalman_update(&ks, y, model)?;
        }
        run.filter_means.push(ks.mean.as_slice().to_vec());
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::linear::{linear_gaussian_model, LinearDrift};
    use crate::model::{NoiseCov, ObsOperator};
    use crate::rng::stream;
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    #[test]
    fn identity_predict_adds_r1() {
        let m = linear_gaussian_model(3, 0.5f64.sqrt(), 1.0, vec![0.0; 3]).unwrap();
        let ks = KalmanState::point(&[0.0; 3]).unwrap();
        let p = kalman_predict(&ks, &m).unwrap();
        assert_abs_diff_eq!(p.cov, DMatrix::identity(3, 3) * 0.5, epsilon = 1e-15);
        let p3 = kalman_predict(&kalman_predict(&p, &m).unwrap(), &m).unwrap();
        assert_abs_diff_eq!(p3.cov[(0, 0)], 1.5, epsilon = 1e-14);
    }

    #[test]
    fn conjugate_scalar_update() {
        let (p0, r, m0, y): (f64, f64, f64, f64) = (2.0, 0.5, 1.0, 3.0);
        let m = linear_gaussian_model(1, 1.0, r.sqrt(), vec![0.0]).unwrap();
        let ks = KalmanState::new(DVector::from_element(1, m0), DMatrix::from_element(1, 1, p0)).unwrap();
        let post = kalman_update(&ks, &[y], &m).unwrap();
        let prec = 1.0 / p0 + 1.0 / r;
        assert_abs_diff_eq!(post.cov[(0, 0)], 1.0 / prec, epsilon = 1e-14);
        assert_abs_diff_eq!(post.mean[0], (m0 / p0 + y / r) / prec, epsilon = 1e-14);
    }

    #[test]
    fn huge_r2_leaves_prior_unchanged() {
        let m = linear_gaussian_model(2, 1.0, 1e8, vec![0.0; 2]).unwrap();
        let ks = KalmanState::new(DVector::from_vec(vec![1.0, -1.0]), DMatrix::identity(2, 2)).unwrap();
        let post = kalman_update(&ks, &[100.0, 100.0], &m).unwrap();
        assert_abs_diff_eq!(post.mean, ks.mean, epsilon = 1e-10);
        assert_abs_diff_eq!(post.cov, ks.cov, epsilon = 1e-10);
    }

    #[test]
    fn update_shrinks_covariance() {
        let m = linear_gaussian_model(3, 1.0, 0.7, vec![0.0; 3]).unwrap();
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5]);
        let ks = KalmanState::new(DVector::zeros(3), a.clone()).unwrap();
        let post = kalman_update(&ks, &[0.1, 0.2, 0.3], &m).unwrap();
        let diff = (a - post.cov).symmetric_eigen();
        assert!(diff.eigenvalues.iter().all(|&l| l >= -1e-12));
    }

    #[test]
    fn predict_matches_sampled_transitions() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.4, -0.3, 0.8]);
        let model = SsmDefinition::new(
            Arc::new(LinearDrift::new(a).unwrap()),
            NoiseCov::diagonal(vec![0.5, 0.8]).unwrap(),
            NoiseCov::scalar(2, 1.0).unwrap(),
            ObsOperator::Identity(2),
            1,
            vec![0.0; 2],
        )
        .unwrap();
        let p0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.6]);
        let ks = KalmanState::new(DVector::from_vec(vec![1.0, -2.0]), p0.clone()).unwrap();
        let pred = kalman_predict(&ks, &model).unwrap();

        let l = p0.cholesky().unwrap().l();
        let mut rng = stream(11, &[]);
        let n = 100_000;
        let mut acc = [0.0; 5];
        for _ in 0..n {
            let z = crate::model::standard_normals(&mut rng, 2);
            let x = &ks.mean + &l * DVector::from_vec(z);
            let xn = model.sample_transition(1, &mut rng, x.as_slice()).unwrap();
            acc[0] += xn[0];
            acc[1] += xn[1];
            acc[2] += xn[0] * xn[0];
            acc[3] += xn[1] * xn[1];
            acc[4] += xn[0] * xn[1];
        }
        let nf = n as f64;
        let (m0, m1) = (acc[0] / nf, acc[1] / nf);
        let emp = [acc[2] / nf - m0 * m0, acc[3] / nf - m1 * m1, acc[4] / nf - m0 * m1];
        let exact = [pred.cov[(0, 0)], pred.cov[(1, 1)], pred.cov[(0, 1)]];
        for (e, x) in emp.iter().zip(exact) {
            assert!((e - x).abs() < 0.05 * x.abs().max(0.2), "{e} vs {x}");
        }
    }

    #[test]
    fn rejects_nonlinear_models() {
        let m = crate::models::lorenz96::lorenz96_model(8, 0.05, 0.1, 0.1, 1, vec![8.0; 8]).unwrap();
        let ks = KalmanState::point(&[8.0; 8]).unwrap();
        assert!(matches!(kalman_predict(&ks, &m), Err(Error::Unsupported(_))));
    }
}
