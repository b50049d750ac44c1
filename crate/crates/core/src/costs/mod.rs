//! Local cost functions with exact value, gradient and Hessian.

mod dataset;
mod huber;
mod quadratic;

pub use dataset::{load_csv_dataset, partition_dataset, Dataset, DatasetError};
pub use huber::{huber_curvature, huber_slope, huber_term, SmoothHuberRegressionCost};
pub use quadratic::QuadraticCost;

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("dimension mismatch: cost has dimension {expected}, argument has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid cost parameters: {0}")]
    InvalidParameters(String),
}

/// A twice continuously differentiable, strongly convex local cost.
pub trait CostFunction: Debug + Send + Sync {
    fn dimension(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> Result<f64, CostError>;

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, CostError>;

    /// Exactly symmetric Hessian.
    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, CostError>;

    /// `(hessian(x) * x - gradient(x), hessian(x))`, the pair the consensus
    /// protocol propagates. Implementations may fuse the two evaluations.
    fn newton_terms(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), CostError> {
        let h = self.hessian(x)?;
        let g = &h * x - self.gradient(x)?;
        Ok((g, h))
    }

    fn check_dimension(&self, x: &DVector<f64>) -> Result<(), CostError> {
        if x.len() == self.dimension() {
            Ok(())
        } else {
            Err(CostError::DimensionMismatch { expected: self.dimension(), found: x.len() })
        }
    }
}

/// Sum of `costs` evaluated at `x`: value, gradient, Hessian.
pub fn aggregate(
    costs: &[&dyn CostFunction],
    x: &DVector<f64>,
) -> Result<(f64, DVector<f64>, DMatrix<f64>), CostError> {
    let n = x.len();
    let mut value = 0.0;
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    for c in costs {
        value += c.value(x)?;
        grad += c.gradient(x)?;
        hess += c.hessian(x)?;
    }
    Ok((value, grad, hess))
}
