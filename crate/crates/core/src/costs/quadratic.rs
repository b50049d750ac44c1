use nalgebra::{DMatrix, DVector};

use super::{CostError, CostFunction};

/// `f(x) = 1/2 (x - a)^T W (x - a)` with `W` symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    weight: DMatrix<f64>,
    center: DVector<f64>,
}

impl QuadraticCost {
    pub fn new(weight: DMatrix<f64>, center: DVector<f64>) -> Result<Self, CostError> {
        let n = center.len();
        if n == 0 || weight.nrows() != n || weight.ncols() != n {
            return Err(CostError::InvalidParameters(format!(
                "weight is {}x{}, center has length {n}",
                weight.nrows(),
                weight.ncols()
            )));
        }
        if weight != weight.transpose() {
            return Err(CostError::InvalidParameters("weight is not symmetric".into()));
        }
        if weight.clone().cholesky().is_none() {
            return Err(CostError::InvalidParameters("weight is not positive definite".into()));
        }
        Ok(Self { weight, center })
    }

    /// One-dimensional `w/2 (x - a)^2`.
    pub fn scalar(w: f64, a: f64) -> Result<Self, CostError> {
        Self::new(DMatrix::from_element(1, 1, w), DVector::from_element(1, a))
    }

    pub fn weight(&self) -> &DMatrix<f64> {
        &self.weight
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }
}

impl CostFunction for QuadraticCost {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64, CostError> {
        self.check_dimension(x)?;
        let d = x - &self.center;
        Ok(0.5 * d.dot(&(&self.weight * &d)))
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, CostError> {
        self.check_dimension(x)?;
        Ok(&self.weight * (x - &self.center))
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, CostError> {
        self.check_dimension(x)?;
        Ok(self.weight.clone())
    }
}
