//! Small symmetric positive-definite solves with an explicit singularity test.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Covariances whose condition estimate exceeds this are treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// Ratio of extreme eigenvalues of a symmetric matrix; infinite when the
/// smallest eigenvalue is not positive.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return if m[(0, 0)] > 0.0 { 1.0 } else { f64::INFINITY };
    }
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(min > 0.0) || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factor of a covariance, refusing ill-conditioned input.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let condition = condition_estimate(m);
        if !(condition <= MAX_CONDITION) {
            return Err(Error::DegenerateCovariance { condition });
        }
        let chol = Cholesky::new(m.clone()).ok_or(Error::DegenerateCovariance { condition })?;
        Ok(Self { chol })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `x' M^{-1} x`.
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        x.dot(&self.solve(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_singular_and_accepts_identity() {
        let zero = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(
            SpdFactor::new(&zero),
            Err(Error::DegenerateCovariance { .. })
        ));
        let rank_one = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(SpdFactor::new(&rank_one).is_err());
        let id = DMatrix::<f64>::identity(3, 3);
        let f = SpdFactor::new(&id).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!((f.quad_form(&x) - 14.0).abs() < 1e-14);
    }

    #[test]
    fn condition_of_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 0.5]));
        assert!((condition_estimate(&m) - 8.0).abs() < 1e-12);
    }
}
