//! Node state machine of the robust asynchronous Newton-Raphson consensus.
//!
//! Each node runs a ratio consensus on `y` (sum of `H_i x_i - grad_i`) and
//! `z` (sum of `H_i`) and moves its estimate toward `[z]_c^{-1} y` with step
//! `epsilon`. Broadcasts carry cumulative masses `b_y`, `b_z`; receivers keep
//! the last cumulative mass seen from each sender, so a delivery after any
//! number of drops transfers everything that was in flight.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::costs::{CostError, CostFunction};

#[derive(Debug, Error, PartialEq)]
pub enum RanrcError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("thresholded curvature is numerically singular")]
    Singular,
    #[error("non-finite value in node state")]
    NonFinite,
    #[error("message from {0}, which is not an in-neighbor")]
    UnknownSender(usize),
    #[error("out-degree must be at least 1")]
    NoOutNeighbors,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Step size and curvature floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RanrcParams {
    pub epsilon: f64,
    pub threshold: f64,
}

impl RanrcParams {
    pub const DEFAULT_THRESHOLD: f64 = 1e-6;

    /// `epsilon` must lie in `[0, 1]` and `threshold` be positive. Zero
    /// `epsilon` freezes the estimates, which isolates the consensus layer.
    pub fn new(epsilon: f64, threshold: f64) -> Result<Self, RanrcError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(RanrcError::InvalidParams(format!("epsilon {epsilon} outside [0, 1]")));
        }
        if !(threshold > 0.0) {
            return Err(RanrcError::InvalidParams(format!("threshold {threshold} must be > 0")));
        }
        Ok(Self { epsilon, threshold })
    }
}

/// Cumulative masses broadcast by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastMessage {
    pub sender: usize,
    pub b_y: DVector<f64>,
    pub b_z: DMatrix<f64>,
}

impl BroadcastMessage {
    /// Flat form `sender, b_y..., upper(b_z) row-major...`.
    pub fn to_flat(&self) -> Vec<f64> {
        let n = self.b_y.len();
        let mut out = Vec::with_capacity(1 + n + n * (n + 1) / 2);
        out.push(self.sender as f64);
        out.extend(self.b_y.iter());
        for a in 0..n {
            for b in a..n {
                out.push(self.b_z[(a, b)]);
            }
        }
        out
    }

    pub fn from_flat(flat: &[f64], n: usize) -> Option<Self> {
        if flat.len() != 1 + n + n * (n + 1) / 2 || flat[0] < 0.0 || flat[0].fract() != 0.0 {
            return None;
        }
        let b_y = DVector::from_column_slice(&flat[1..1 + n]);
        let mut b_z = DMatrix::zeros(n, n);
        let mut k = 1 + n;
        for a in 0..n {
            for b in a..n {
                b_z[(a, b)] = flat[k];
                b_z[(b, a)] = flat[k];
                k += 1;
            }
        }
        Some(Self { sender: flat[0] as usize, b_y, b_z })
    }
}

/// Last cumulative masses received from one in-neighbor.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveLedger {
    pub r_y: DVector<f64>,
    pub r_z: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub id: usize,
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<f64>,
    pub g: DVector<f64>,
    pub g_old: DVector<f64>,
    pub h: DMatrix<f64>,
    pub h_old: DMatrix<f64>,
    pub b_y: DVector<f64>,
    pub b_z: DMatrix<f64>,
    pub ledgers: BTreeMap<usize, ReceiveLedger>,
}

impl NodeState {
    pub fn initialize(
        id: usize,
        cost: &dyn CostFunction,
        x0: &DVector<f64>,
        in_neighbors: &[usize],
    ) -> Result<Self, RanrcError> {
        let (g, h) = cost.newton_terms(x0)?;
        let n = x0.len();
        let ledgers = in_neighbors
            .iter()
            .map(|&j| (j, ReceiveLedger { r_y: DVector::zeros(n), r_z: DMatrix::zeros(n, n) }))
            .collect();
        Ok(Self {
            id,
            x: x0.clone(),
            y: g.clone(),
            z: h.clone(),
            g_old: g.clone(),
            g,
            h_old: h.clone(),
            h,
            b_y: DVector::zeros(n),
            b_z: DMatrix::zeros(n, n),
            ledgers,
        })
    }

    pub fn dimension(&self) -> usize {
        self.x.len()
    }

    /// Local update before transmission; returns the broadcast packet.
    pub fn wake_up(
        &mut self,
        cost: &dyn CostFunction,
        params: &RanrcParams,
        out_degree: usize,
    ) -> Result<BroadcastMessage, RanrcError> {
        if out_degree == 0 {
            return Err(RanrcError::NoOutNeighbors);
        }
        let share = 1.0 / (out_degree as f64 + 1.0);
        self.y = (&self.y + &self.g - &self.g_old) * share;
        self.z = (&self.z + &self.h - &self.h_old) * share;
        symmetrize(&mut self.z);
        self.refresh_estimate(cost, params)?;
        self.b_y += &self.y;
        self.b_z += &self.z;
        Ok(BroadcastMessage { sender: self.id, b_y: self.b_y.clone(), b_z: self.b_z.clone() })
    }

    /// Processes a successfully delivered packet.
    pub fn receive(
        &mut self,
        cost: &dyn CostFunction,
        params: &RanrcParams,
        msg: &BroadcastMessage,
    ) -> Result<(), RanrcError> {
        let ledger = self
            .ledgers
            .get(&msg.sender)
            .ok_or(RanrcError::UnknownSender(msg.sender))?;
        self.y = &msg.b_y - &ledger.r_y + &self.y + &self.g - &self.g_old;
        self.z = &msg.b_z - &ledger.r_z + &self.z + &self.h - &self.h_old;
        symmetrize(&mut self.z);
        self.refresh_estimate(cost, params)?;
        let ledger = self.ledgers.get_mut(&msg.sender).expect("checked above");
        ledger.r_y.copy_from(&msg.b_y);
        ledger.r_z.copy_from(&msg.b_z);
        Ok(())
    }

    /// Shared tail of both updates: roll `g`/`h` into the old slots, take
    /// the damped Newton step and re-evaluate the local terms.
    fn refresh_estimate(&mut self, cost: &dyn CostFunction, params: &RanrcParams) -> Result<(), RanrcError> {
        std::mem::swap(&mut self.g_old, &mut self.g);
        std::mem::swap(&mut self.h_old, &mut self.h);
        if params.epsilon > 0.0 {
            let target = thresholded_solve(&self.z, params.threshold, &self.y)?;
            self.x = &self.x * (1.0 - params.epsilon) + target * params.epsilon;
            if self.x.iter().any(|v| !v.is_finite()) {
                return Err(RanrcError::NonFinite);
            }
        }
        let (g, h) = cost.newton_terms(&self.x)?;
        self.g = g;
        self.h = h;
        Ok(())
    }
}

/// Sets `m` to `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for a in 0..n {
        for b in (a + 1)..n {
            let v = 0.5 * (m[(a, b)] + m[(b, a)]);
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
}

fn check_symmetric(z: &DMatrix<f64>) -> Result<(), RanrcError> {
    let scale = z.amax().max(1.0);
    let asym = (z - z.transpose()).amax();
    if asym > 1e-12 * scale {
        Err(RanrcError::NotSymmetric(asym))
    } else {
        Ok(())
    }
}

/// True when every eigenvalue of `z` is strictly above `c`.
fn floor_inactive(z: &DMatrix<f64>, c: f64) -> bool {
    let shifted = z - DMatrix::identity(z.nrows(), z.ncols()) * c;
    shifted.cholesky().is_some()
}

/// `[z]_c`: eigenvalues of the symmetric matrix `z` floored at `c`. For a
/// 1x1 matrix this is exactly `max(z, c)`.
pub fn threshold(z: &DMatrix<f64>, c: f64) -> Result<DMatrix<f64>, RanrcError> {
    check_symmetric(z)?;
    if z.iter().any(|v| !v.is_finite()) {
        return Err(RanrcError::NonFinite);
    }
    if z.nrows() == 1 {
        return Ok(DMatrix::from_element(1, 1, z[(0, 0)].max(c)));
    }
    if floor_inactive(z, c) {
        return Ok(z.clone());
    }
    let eig = SymmetricEigen::new(z.clone());
    let floored = eig.eigenvalues.map(|l| l.max(c));
    let mut out = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// `[z]_c^{-1} y` without forming the inverse.
pub fn thresholded_solve(z: &DMatrix<f64>, c: f64, y: &DVector<f64>) -> Result<DVector<f64>, RanrcError> {
    if z.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(RanrcError::NonFinite);
    }
    if z.nrows() == 1 {
        return Ok(y / z[(0, 0)].max(c));
    }
    if floor_inactive(z, c) {
        if let Some(chol) = z.clone().cholesky() {
            return Ok(chol.solve(y));
        }
    }
    check_symmetric(z)?;
    let eig = SymmetricEigen::new(z.clone());
    let mut coeffs = eig.eigenvectors.transpose() * y;
    for (v, l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *v /= l.max(c);
    }
    let out = &eig.eigenvectors * coeffs;
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(RanrcError::Singular)
    }
}

/// Network Newton target `(sum_i H_i)^{-1} sum_i (H_i x_i - grad_i)`.
pub fn phi(states: &[(&DVector<f64>, &dyn CostFunction)]) -> Result<DVector<f64>, RanrcError> {
    let (x0, _) = states
        .first()
        .ok_or_else(|| RanrcError::InvalidParams("phi of an empty network".into()))?;
    let n = x0.len();
    let mut g_sum = DVector::zeros(n);
    let mut h_sum = DMatrix::zeros(n, n);
    for (x, cost) in states {
        let (g, h) = cost.newton_terms(x)?;
        g_sum += g;
        h_sum += h;
    }
    h_sum.lu().solve(&g_sum).filter(|v| v.iter().all(|e| e.is_finite())).ok_or(RanrcError::Singular)
}
