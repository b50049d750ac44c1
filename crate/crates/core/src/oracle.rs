//! Centralized reference solvers for `min_x sum_i f_i(x)`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::costs::{aggregate, CostError, CostFunction};
use crate::engine::{EngineError, Network, RanrcProtocol, RunSpec, Simulator};
use crate::ranrc::{symmetrize, RanrcParams};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("no costs given")]
    Empty,
    #[error("iteration cap {cap} reached")]
    IterationCap { cap: usize, last: DVector<f64> },
    #[error("Hessian of the total cost is not positive definite")]
    NotPositiveDefinite,
    #[error("line search could not decrease the cost")]
    LineSearch,
    #[error("malformed oracle record: {0}")]
    Record(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("network did not settle within {0} events")]
    NotConverged(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    /// Squared Newton decrement `g^T H^{-1} g` at `x_star`.
    pub newton_decrement: f64,
    pub iterations: usize,
}

fn fmt_vec(v: &DVector<f64>) -> String {
    v.iter().map(|x| format!("{x:.16e}")).collect::<Vec<_>>().join(",")
}

impl OracleResult {
    /// `key=value` lines; vectors comma-separated at full precision.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "x_star={}", fmt_vec(&self.x_star));
        let _ = writeln!(s, "f_star={:.16e}", self.f_star);
        let _ = writeln!(s, "newton_decrement={:.16e}", self.newton_decrement);
        let _ = writeln!(s, "iterations={}", self.iterations);
        s
    }

    pub fn from_record(text: &str) -> Result<Self, OracleError> {
        let mut x_star = None;
        let mut f_star = None;
        let mut decrement = None;
        let mut iterations = None;
        let bad = |l: &str| OracleError::Record(format!("bad line `{l}`"));
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(line))?;
            match k.trim() {
                "x_star" => {
                    let xs = v.split(',').map(|c| c.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>();
                    x_star = Some(DVector::from_vec(xs.map_err(|_| bad(line))?));
                }
                "f_star" => f_star = Some(v.trim().parse().map_err(|_| bad(line))?),
                "newton_decrement" => decrement = Some(v.trim().parse().map_err(|_| bad(line))?),
                "iterations" => iterations = Some(v.trim().parse().map_err(|_| bad(line))?),
                _ => return Err(bad(line)),
            }
        }
        let missing = |k: &str| OracleError::Record(format!("missing `{k}`"));
        Ok(Self {
            x_star: x_star.ok_or_else(|| missing("x_star"))?,
            f_star: f_star.ok_or_else(|| missing("f_star"))?,
            newton_decrement: decrement.ok_or_else(|| missing("newton_decrement"))?,
            iterations: iterations.ok_or_else(|| missing("iterations"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// Stop when the squared Newton decrement drops below this.
    pub tol: f64,
    /// Armijo sufficient-decrease fraction.
    pub armijo: f64,
    pub shrink: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-9, armijo: 0.25, shrink: 0.5, max_iterations: 200, max_halvings: 60 }
    }
}

/// Damped Newton method with backtracking line search.
pub fn newton_minimize(
    costs: &[&dyn CostFunction],
    x0: &DVector<f64>,
    opts: &NewtonOptions,
) -> Result<OracleResult, OracleError> {
    if costs.is_empty() {
        return Err(OracleError::Empty);
    }
    let total = |x: &DVector<f64>| -> Result<f64, CostError> { costs.iter().map(|c| c.value(x)).sum() };
    let mut x = x0.clone();
    for iterations in 0..=opts.max_iterations {
        let (f, g, h) = aggregate(costs, &x)?;
        let chol = h.cholesky().ok_or(OracleError::NotPositiveDefinite)?;
        let step = -chol.solve(&g);
        let decrement = -g.dot(&step);
        if decrement < opts.tol {
            return Ok(OracleResult { x_star: x, f_star: f, newton_decrement: decrement, iterations });
        }
        if iterations == opts.max_iterations {
            break;
        }
        let slope = g.dot(&step);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..opts.max_halvings {
            let candidate = &x + &step * t;
            if total(&candidate)? <= f + opts.armijo * t * slope {
                x = candidate;
                accepted = true;
                break;
            }
            t *= opts.shrink;
        }
        if !accepted {
            return Err(OracleError::LineSearch);
        }
    }
    Err(OracleError::IterationCap { cap: opts.max_iterations, last: x })
}

/// Largest Hessian eigenvalue of the total cost over `points`.
pub fn max_curvature(costs: &[&dyn CostFunction], points: &[DVector<f64>]) -> Result<f64, OracleError> {
    let mut best: f64 = 0.0;
    for p in points {
        let (_, _, h) = aggregate(costs, p)?;
        best = best.max(h.symmetric_eigenvalues().max());
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub x: DVector<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// First-order cross-check: Nesterov-accelerated gradient descent with
/// fixed step `1/lipschitz` and gradient-based restarts (momentum resets
/// whenever the step direction opposes the last move), run until the
/// gradient norm falls below `grad_tol`. Uses gradients only, so it stays
/// reliable once value differences drop below rounding.
pub fn accelerated_gradient_minimize(
    costs: &[&dyn CostFunction],
    x0: &DVector<f64>,
    lipschitz: f64,
    grad_tol: f64,
    max_iterations: usize,
) -> Result<GradientResult, OracleError> {
    if costs.is_empty() {
        return Err(OracleError::Empty);
    }
    let grad = |x: &DVector<f64>| -> Result<DVector<f64>, CostError> {
        let mut g = DVector::zeros(x.len());
        for c in costs {
            g += c.gradient(x)?;
        }
        Ok(g)
    };
    let step = 1.0 / lipschitz;
    let mut x = x0.clone();
    let mut lookahead = x.clone();
    let mut momentum = 1.0f64;
    for k in 0..max_iterations {
        let g_look = grad(&lookahead)?;
        let next = &lookahead - &g_look * step;
        let g_next = grad(&next)?;
        let norm = g_next.norm();
        if norm < grad_tol {
            return Ok(GradientResult { x: next, gradient_norm: norm, iterations: k + 1 });
        }
        if g_look.dot(&(&next - &x)) > 0.0 {
            momentum = 1.0;
            lookahead = next.clone();
            x = next;
            continue;
        }
        let m_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        lookahead = &next + (&next - &x) * ((momentum - 1.0) / m_next);
        momentum = m_next;
        x = next;
    }
    Err(OracleError::IterationCap { cap: max_iterations, last: x })
}

/// Runs the consensus protocol from initial `y`/`z` values offset by
/// `perturbations[i] = (dy_i, dz_i)` (the `g`/`h` bookkeeping is left
/// untouched, so the offsets persist as extra mass) and returns the distance between the
/// settled network average and `x_star`.
///
/// The run proceeds in chunks of `chunk` events until the spread of the
/// estimates and their change over one chunk both fall below `settle_tol`.
pub fn expected_fixed_point_perturbation(
    network: &Network,
    params: RanrcParams,
    spec: &RunSpec,
    x0: &DVector<f64>,
    x_star: &DVector<f64>,
    perturbations: &[(DVector<f64>, DMatrix<f64>)],
    chunk: u64,
    settle_tol: f64,
) -> Result<f64, OracleError> {
    let mut sim = Simulator::new(network, RanrcProtocol(params), std::slice::from_ref(x0), spec)?;
    for (state, (dy, dz)) in sim.states_mut().iter_mut().zip(perturbations) {
        state.y += dy;
        state.z += dz;
        symmetrize(&mut state.z);
    }
    let average = |sim: &Simulator<'_, RanrcProtocol>| {
        let xs = sim.estimates();
        let n = xs.len() as f64;
        xs.into_iter().fold(DVector::zeros(x0.len()), |acc, x| acc + x) / n
    };
    let mut previous = average(&sim);
    while sim.events_done() < spec.events {
        for _ in 0..chunk {
            sim.step()?;
        }
        let current = average(&sim);
        let spread = sim.estimates().iter().map(|x| (*x - &current).norm()).fold(0.0, f64::max);
        let moved = (&current - &previous).norm();
        if spread < settle_tol && moved < settle_tol {
            return Ok((current - x_star).norm());
        }
        previous = current;
    }
    Err(OracleError::NotConverged(spec.events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::QuadraticCost;

    fn quads() -> Vec<QuadraticCost> {
        vec![
            QuadraticCost::new(
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
                DVector::from_vec(vec![1.0, -1.0]),
            )
            .unwrap(),
            QuadraticCost::new(DMatrix::identity(2, 2) * 0.5, DVector::from_vec(vec![-3.0, 2.0])).unwrap(),
        ]
    }

    #[test]
    fn quadratic_in_one_step() {
        let qs = quads();
        let refs: Vec<&dyn CostFunction> = qs.iter().map(|q| q as &dyn CostFunction).collect();
        let res = newton_minimize(&refs, &DVector::zeros(2), &NewtonOptions::default()).unwrap();
        let w_sum = qs[0].weight() + qs[1].weight();
        let rhs = qs[0].weight() * qs[0].center() + qs[1].weight() * qs[1].center();
        let closed = w_sum.lu().solve(&rhs).unwrap();
        assert!((&res.x_star - &closed).amax() <= 1e-12 * closed.amax());
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn start_at_minimizer_takes_no_steps() {
        let q = QuadraticCost::scalar(2.0, 3.0).unwrap();
        let res = newton_minimize(&[&q], &DVector::from_element(1, 3.0), &NewtonOptions::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert_eq!(res.newton_decrement, 0.0);
    }

    #[test]
    fn iteration_cap_reports_last_iterate() {
        let qs = quads();
        let refs: Vec<&dyn CostFunction> = qs.iter().map(|q| q as &dyn CostFunction).collect();
        let opts = NewtonOptions { max_iterations: 0, ..Default::default() };
        match newton_minimize(&refs, &DVector::zeros(2), &opts) {
            Err(OracleError::IterationCap { last, .. }) => assert_eq!(last, DVector::zeros(2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn accelerated_matches_newton_on_quadratics() {
        let qs = quads();
        let refs: Vec<&dyn CostFunction> = qs.iter().map(|q| q as &dyn CostFunction).collect();
        let newton = newton_minimize(&refs, &DVector::zeros(2), &NewtonOptions::default()).unwrap();
        let lip = max_curvature(&refs, &[DVector::zeros(2)]).unwrap();
        let agd = accelerated_gradient_minimize(&refs, &DVector::zeros(2), lip, 1e-12, 100_000).unwrap();
        assert!((agd.x - newton.x_star).amax() < 1e-10);
    }

    #[test]
    fn record_round_trip() {
        let r = OracleResult {
            x_star: DVector::from_vec(vec![0.1, -2.5e-7]),
            f_star: 12.75,
            newton_decrement: 3.2e-12,
            iterations: 7,
        };
        assert_eq!(OracleResult::from_record(&r.to_record()).unwrap(), r);
        assert!(OracleResult::from_record("x_star=1\n").is_err());
    }
}
