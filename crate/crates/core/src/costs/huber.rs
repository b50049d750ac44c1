use nalgebra::{DMatrix, DVector};

use super::{CostError, CostFunction, Dataset};

/// Smooth Huber term `r^2 / (|r| + beta)`.
pub fn huber_term(r: f64, beta: f64) -> f64 {
    r * r / (r.abs() + beta)
}

/// First derivative of [`huber_term`] in `r`.
pub fn huber_slope(r: f64, beta: f64) -> f64 {
    let d = r.abs() + beta;
    (r * r.abs() + 2.0 * beta * r) / (d * d)
}

/// Second derivative of [`huber_term`] in `r`; equals `2 / beta` at `r = 0`.
pub fn huber_curvature(r: f64, beta: f64) -> f64 {
    let d = r.abs() + beta;
    2.0 * beta * beta / (d * d * d)
}

/// Robust linear regression cost over a local data share:
///
/// `sum_j huber_term(y_j - chi_j^T x - x0, beta) + gamma * |x|^2`
///
/// The decision variable stacks the feature weights `x` followed by the
/// intercept `x0`. The ridge term skips the intercept unless
/// `ridge_intercept` is set.
#[derive(Debug, Clone)]
pub struct SmoothHuberRegressionCost {
    /// Row-major augmented features, each row `(chi_j, 1)`.
    rows: Vec<f64>,
    targets: Vec<f64>,
    dim: usize,
    beta: f64,
    gamma: f64,
    ridge_intercept: bool,
}

impl SmoothHuberRegressionCost {
    pub fn new(data: &Dataset, beta: f64, gamma: f64, ridge_intercept: bool) -> Result<Self, CostError> {
        if !(beta > 0.0) || !(gamma >= 0.0) {
            return Err(CostError::InvalidParameters(format!(
                "need beta > 0 and gamma >= 0, got beta={beta}, gamma={gamma}"
            )));
        }
        let dim = data.feature_dimension() + 1;
        let mut rows = Vec::with_capacity(data.len() * dim);
        let mut targets = Vec::with_capacity(data.len());
        for (features, target) in data.rows() {
            rows.extend_from_slice(features);
            rows.push(1.0);
            targets.push(*target);
        }
        Ok(Self { rows, targets, dim, beta, gamma, ridge_intercept })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn sample_count(&self) -> usize {
        self.targets.len()
    }

    fn row(&self, j: usize) -> &[f64] {
        &self.rows[j * self.dim..(j + 1) * self.dim]
    }

    fn residual(&self, j: usize, x: &DVector<f64>) -> f64 {
        let pred: f64 = self.row(j).iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        self.targets[j] - pred
    }

    fn ridge_len(&self) -> usize {
        if self.ridge_intercept {
            self.dim
        } else {
            self.dim - 1
        }
    }

    fn accumulate_hessian(&self, x: &DVector<f64>, hess: &mut DMatrix<f64>) {
        let d = self.dim;
        for j in 0..self.targets.len() {
            let w = huber_curvature(self.residual(j, x), self.beta);
            let row = self.row(j);
            for a in 0..d {
                let wa = w * row[a];
                for b in a..d {
                    hess[(a, b)] += wa * row[b];
                }
            }
        }
        for k in 0..self.ridge_len() {
            hess[(k, k)] += 2.0 * self.gamma;
        }
        for a in 0..d {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
    }
}

impl CostFunction for SmoothHuberRegressionCost {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64, CostError> {
        self.check_dimension(x)?;
        let data: f64 = (0..self.targets.len())
            .map(|j| huber_term(self.residual(j, x), self.beta))
            .sum();
        let ridge: f64 = x.iter().take(self.ridge_len()).map(|v| v * v).sum();
        Ok(data + self.gamma * ridge)
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, CostError> {
        self.check_dimension(x)?;
        let mut grad = DVector::zeros(self.dim);
        for j in 0..self.targets.len() {
            let s = huber_slope(self.residual(j, x), self.beta);
            for (g, a) in grad.iter_mut().zip(self.row(j)) {
                *g -= s * a;
            }
        }
        for k in 0..self.ridge_len() {
            grad[k] += 2.0 * self.gamma * x[k];
        }
        Ok(grad)
    }

    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, CostError> {
        self.check_dimension(x)?;
        let mut hess = DMatrix::zeros(self.dim, self.dim);
        self.accumulate_hessian(x, &mut hess);
        Ok(hess)
    }
}
