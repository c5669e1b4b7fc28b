use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparsity::{ensure_finite, ensure_finite_matrix, IndexSet};

/// A linear model `y = Xβ* + e` together with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionInstance<T: Scalar> {
    pub x: DMatrix<T>,
    pub beta_star: DVector<T>,
    pub e: DVector<T>,
    pub y: DVector<T>,
    pub sigma: T,
}

impl<T: Scalar> RegressionInstance<T> {
    /// Assembles an instance, computing `y = Xβ* + e`.
    pub fn new(x: DMatrix<T>, beta_star: DVector<T>, e: DVector<T>, sigma: T) -> Result<Self> {
        ensure_finite_matrix(&x, "design matrix")?;
        ensure_finite(&beta_star, "beta_star")?;
        ensure_finite(&e, "noise")?;
        if x.ncols() != beta_star.len() || x.nrows() != e.len() {
            return Err(Error::Dimension(format!(
                "X is {}x{}, beta_star has {} entries, e has {}",
                x.nrows(),
                x.ncols(),
                beta_star.len(),
                e.len()
            )));
        }
        if !(sigma >= T::zero()) {
            return Err(Error::InvalidParameter(format!("sigma = {sigma} must be nonnegative")));
        }
        let y = &x * &beta_star + &e;
        Ok(RegressionInstance { x, beta_star, e, y, sigma })
    }

    pub fn m(&self) -> usize {
        self.x.nrows()
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    /// `J = supp(β*)` under the exact-zero test.
    pub fn support(&self) -> IndexSet {
        IndexSet::support(&self.beta_star, T::zero())
    }

    pub fn sparsity(&self) -> usize {
        self.support().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observation_is_consistent() {
        let x = DMatrix::from_row_slice(2, 3, &[2.0, 3.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_column_slice(&[1.0, 0.0, 0.0]);
        let e = DVector::from_column_slice(&[0.1, -0.2]);
        let inst = RegressionInstance::new(x.clone(), b.clone(), e.clone(), 0.1).unwrap();
        let resid = &inst.y - (&x * &b + &e);
        assert!(resid.norm() <= 1e-10 * inst.y.norm());
        assert_eq!(inst.sparsity(), 1);
        assert!(RegressionInstance::new(x, b, DVector::zeros(3), 0.1).is_err());
    }
}
