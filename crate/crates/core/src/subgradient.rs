//! Asynchronous distributed subgradient baseline.
//!
//! A receiver averages its estimate with the sender's and steps against the
//! sum of both local gradients with the diminishing size `alpha / t`.

use nalgebra::DVector;
use thiserror::Error;

use crate::costs::{CostError, CostFunction};

#[derive(Debug, Error, PartialEq)]
pub enum SubgradientError {
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("payload does not match the configured update rule")]
    PayloadMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubgradientParams {
    pub alpha: f64,
    /// Use `x <- (x_i + x_j)/2 + alpha/t (f_i + f_j)`,
    /// which adds cost values instead of stepping along gradients.
    pub value_sum_update: bool,
}

impl SubgradientParams {
    pub fn new(alpha: f64, value_sum_update: bool) -> Result<Self, SubgradientError> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(SubgradientError::InvalidParams(format!("alpha {alpha} must be >= 0")));
        }
        Ok(Self { alpha, value_sum_update })
    }
}

/// The 13-point logarithmic step grid `10^(-4 + k/3)`, `k = 0..=12`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=12).map(|k| 10f64.powf(-4.0 + k as f64 / 3.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SgPayload {
    Gradient(DVector<f64>),
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgMessage {
    pub sender: usize,
    pub x: DVector<f64>,
    pub payload: SgPayload,
}

impl SgMessage {
    /// Numbers on the wire, sender id included.
    pub fn payload_len(&self) -> usize {
        1 + self.x.len()
            + match &self.payload {
                SgPayload::Gradient(g) => g.len(),
                SgPayload::Value(_) => 1,
            }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgradientNodeState {
    pub id: usize,
    pub x: DVector<f64>,
    /// One plus the number of packets received so far.
    pub t: u64,
}

impl SubgradientNodeState {
    pub fn initialize(id: usize, x0: &DVector<f64>) -> Self {
        Self { id, x: x0.clone(), t: 1 }
    }

    pub fn broadcast(
        &self,
        cost: &dyn CostFunction,
        params: &SubgradientParams,
    ) -> Result<SgMessage, SubgradientError> {
        let payload = if params.value_sum_update {
            SgPayload::Value(cost.value(&self.x)?)
        } else {
            SgPayload::Gradient(cost.gradient(&self.x)?)
        };
        Ok(SgMessage { sender: self.id, x: self.x.clone(), payload })
    }

    pub fn receive(
        &mut self,
        cost: &dyn CostFunction,
        params: &SubgradientParams,
        msg: &SgMessage,
    ) -> Result<(), SubgradientError> {
        let step = params.alpha / self.t as f64;
        let mid = (&msg.x + &self.x) * 0.5;
        self.x = match (&msg.payload, params.value_sum_update) {
            (SgPayload::Gradient(g), false) => mid - (g + cost.gradient(&self.x)?) * step,
            (SgPayload::Value(v), true) => mid.add_scalar(step * (v + cost.value(&self.x)?)),
            _ => return Err(SubgradientError::PayloadMismatch),
        };
        self.t += 1;
        Ok(())
    }
}
