use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Linear observation operator `C`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObsOperator {
    /// `C = I_d`.
    Identity(usize),
    /// Row `r` picks coordinate `indices[r]` (0-based) of the state.
    Selector { dim_x: usize, indices: Vec<usize> },
    Dense(DMatrix<f64>),
}

impl ObsOperator {
    pub fn selector(dim_x: usize, indices: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= dim_x) {
            return Err(Error::InvalidParameter(format!(
                "selector index {bad} out of range for state dimension {dim_x}"
            )));
        }
        Ok(ObsOperator::Selector { dim_x, indices })
    }

    pub fn dim_x(&self) -> usize {
        match self {
            ObsOperator::Identity(d) => *d,
            ObsOperator::Selector { dim_x, .. } => *dim_x,
            ObsOperator::Dense(c) => c.ncols(),
        }
    }

    pub fn dim_y(&self) -> usize {
        match self {
            ObsOperator::Identity(d) => *d,
            ObsOperator::Selector { indices, .. } => indices.len(),
            ObsOperator::Dense(c) => c.nrows(),
        }
    }

    /// `C x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ObsOperator::Identity(_) => x.to_vec(),
            ObsOperator::Selector { indices, .. } => indices.iter().map(|&i| x[i]).collect(),
            ObsOperator::Dense(c) => (c * DVector::from_column_slice(x)).iter().copied().collect(),
        }
    }

    /// `C M` for a `d x k` matrix `M`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            ObsOperator::Identity(_) => m.clone(),
            ObsOperator::Selector { indices, .. } => {
                DMatrix::from_fn(indices.len(), m.ncols(), |r, c| m[(indices[r], c)])
            }
            ObsOperator::Dense(c) => c * m,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            ObsOperator::Identity(d) => DMatrix::identity(*d, *d),
            ObsOperator::Selector { dim_x, indices } => {
                let mut c = DMatrix::zeros(indices.len(), *dim_x);
                for (r, &i) in indices.iter().enumerate() {
                    c[(r, i)] = 1.0;
                }
                c
            }
            ObsOperator::Dense(c) => c.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selector_matches_dense() {
        let op = ObsOperator::selector(5, vec![0, 3, 4]).unwrap();
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let dense = op.to_dense();
        let via_dense: Vec<f64> = (&dense * DVector::from_column_slice(&x)).iter().copied().collect();
        assert_eq!(op.apply(&x), via_dense);
        let m = DMatrix::from_fn(5, 2, |r, c| (r * 2 + c) as f64);
        assert_eq!(op.apply_matrix(&m), &dense * &m);
    }

    #[test]
    fn selector_rejects_out_of_range() {
        assert!(ObsOperator::selector(3, vec![3]).is_err());
    }
}
