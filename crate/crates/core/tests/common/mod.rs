#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use newton_consensus::costs::{load_csv_dataset, CostFunction, Dataset, QuadraticCost, SmoothHuberRegressionCost};
use newton_consensus::ExperimentConfig;
use rand::Rng;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn housing_path() -> PathBuf {
    workspace_root().join("data/housing.csv")
}

pub fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&workspace_root().join("configs").join(name)).expect("bundled config")
}

pub fn housing_rows(n: usize) -> Dataset {
    load_csv_dataset(&housing_path(), &(0..9).collect::<Vec<_>>(), 13).unwrap().truncated(n)
}

pub fn random_vector(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(lo..hi))
}

/// Random symmetric positive definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(n: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> DMatrix<f64> {
    let q = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)).qr().q();
    let d = DMatrix::from_diagonal(&random_vector(n, lo, hi, rng));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn random_quadratic(n: usize, rng: &mut impl Rng) -> Arc<dyn CostFunction> {
    Arc::new(QuadraticCost::new(random_spd(n, 0.5, 2.0, rng), random_vector(n, -5.0, 5.0, rng)).unwrap())
}

pub fn huber(rows: &Dataset, beta: f64, gamma: f64) -> Arc<dyn CostFunction> {
    Arc::new(SmoothHuberRegressionCost::new(rows, beta, gamma, false).unwrap())
}

fn rel_err(approx: &DVector<f64>, exact: &DVector<f64>) -> f64 {
    (approx - exact).amax() / exact.amax().max(1.0)
}

/// Worst relative error of the analytic gradient against central
/// differences of the value with step `h`.
pub fn gradient_fd_error(cost: &dyn CostFunction, x: &DVector<f64>, h: f64) -> f64 {
    let g = cost.gradient(x).unwrap();
    let fd = DVector::from_fn(x.len(), |k, _| {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[k] += h;
        xm[k] -= h;
        (cost.value(&xp).unwrap() - cost.value(&xm).unwrap()) / (2.0 * h)
    });
    rel_err(&fd, &g)
}

/// Worst relative column error of the analytic Hessian against central
/// differences of the gradient.
pub fn hessian_fd_error(cost: &dyn CostFunction, x: &DVector<f64>, h: f64) -> f64 {
    let hess = cost.hessian(x).unwrap();
    let scale = hess.amax().max(1.0);
    let mut worst: f64 = 0.0;
    for k in 0..x.len() {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[k] += h;
        xm[k] -= h;
        let col = (cost.gradient(&xp).unwrap() - cost.gradient(&xm).unwrap()) / (2.0 * h);
        worst = worst.max((col - hess.column(k)).amax() / scale);
    }
    worst
}

/// Points for the Huber suite: feature weights near the fitted range and an
/// intercept spread over the target range, so residuals of both signs and
/// near zero all appear.
pub fn huber_point(rng: &mut impl Rng) -> DVector<f64> {
    let mut x = random_vector(10, -1.0, 1.0, rng);
    x[9] = rng.gen_range(-10.0..40.0);
    x
}

/// Least-squares slope and coefficient of determination of `ys` on `xs`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, sxy * sxy / (sxx * syy))
}
