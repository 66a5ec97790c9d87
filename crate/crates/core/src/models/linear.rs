use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{Drift, NoiseCov, ObsOperator, SsmDefinition};

/// `q(x) = x`.
#[derive(Debug, Clone, Copy)]
pub struct IdentityDrift {
    d: usize,
}

impl IdentityDrift {
    pub fn new(d: usize) -> Self {
        Self { d }
    }
}

impl Drift for IdentityDrift {
    fn dim(&self) -> usize {
        self.d
    }

    fn apply(&self, _step: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(x);
        Ok(())
    }

    fn linear_map(&self) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(self.d, self.d))
    }

    fn name(&self) -> &str {
        "identity"
    }
}

/// `q(x) = A x`.
#[derive(Debug, Clone)]
pub struct LinearDrift {
    a: DMatrix<f64>,
}

impl LinearDrift {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::InvalidParameter("linear drift must be a non-empty square matrix".into()));
        }
        Ok(Self { a })
    }
}

impl Drift for LinearDrift {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn apply(&self, _step: usize, x: &[f64], out: &mut [f64]) -> Result<()> {
        let y = &self.a * DVector::from_column_slice(x);
        out.copy_from_slice(y.as_slice());
        Ok(())
    }

    fn linear_map(&self) -> Option<DMatrix<f64>> {
        Some(self.a.clone())
    }

    fn name(&self) -> &str {
        "linear"
    }
}

/// Random-walk linear-Gaussian model, fully observed:
/// `q(x) = x`, `R1^{1/2} = r1 I`, `R2^{1/2} = r2 I`, `C = I`.
pub fn linear_gaussian_model(d: usize, r1_sqrt: f64, r2_sqrt: f64, x0: Vec<f64>) -> Result<SsmDefinition> {
    SsmDefinition::new(
        Arc::new(IdentityDrift::new(d)),
        NoiseCov::scalar(d, r1_sqrt)?,
        NoiseCov::scalar(d, r2_sqrt)?,
        ObsOperator::Identity(d),
        1,
        x0,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::StateSpaceModel;

    #[test]
    fn linear_drift_applies_matrix() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 1.0, -1.0, 2.0]);
        let drift = LinearDrift::new(a).unwrap();
        let mut out = [0.0; 2];
        drift.apply(1, &[1.0, 2.0], &mut out).unwrap();
        assert_eq!(out, [2.5, 3.0]);
        assert!(LinearDrift::new(DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn linear_gaussian_constructor() {
        let m = linear_gaussian_model(3, 0.5f64.sqrt(), 0.1, vec![1.5; 3]).unwrap();
        assert_eq!(m.dim_x(), 3);
        assert_eq!(m.dim_y(), 3);
        assert!(m.drift().linear_map().is_some());
    }
}
