//! Deterministic broadcast-event simulator.
//!
//! Simulated time is the global event counter. At event `t` the scheduler
//! picks one node, the node wakes up and broadcasts, and each out-neighbor,
//! in ascending id order, either receives the packet or misses it according
//! to the loss model. Metrics are recorded after the event completes.

mod loss;
mod record;
mod scheduler;
mod seed;

pub use loss::{BoundedPattern, LossKind, LossProcess};
pub use record::{distance_summary, RecordParseError, TrajectoryRecord, TrajectoryRow};
pub use scheduler::{Scheduler, SchedulerKind};
pub use seed::derive_seed;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{AlgorithmKind, ConfigError, ExperimentConfig, LossModelKind};
use crate::costs::{CostError, CostFunction};
use crate::graph::DirectedGraph;
use crate::ranrc::{BroadcastMessage, NodeState, RanrcError, RanrcParams};
use crate::subgradient::{SgMessage, SubgradientError, SubgradientNodeState, SubgradientParams};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("communication graph is not strongly connected")]
    NotStronglyConnected,
    #[error("network has {graph} nodes but {costs} costs")]
    CostCountMismatch { graph: usize, costs: usize },
    #[error("local costs disagree on dimension")]
    DimensionMismatch,
    #[error("edge ({from}, {to}) failed {streak} times in a row, bound is {bound}")]
    LossBoundViolated { from: usize, to: usize, streak: u32, bound: u32 },
    #[error("estimates became non-finite at event {0}")]
    Diverged(u64),
    #[error(transparent)]
    Ranrc(RanrcError),
    #[error(transparent)]
    Subgradient(SubgradientError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("empty sweep")]
    EmptySweep,
}

/// Graph plus one local cost per node.
#[derive(Debug, Clone)]
pub struct Network {
    pub graph: DirectedGraph,
    pub costs: Vec<Arc<dyn CostFunction>>,
}

impl Network {
    pub fn new(graph: DirectedGraph, costs: Vec<Arc<dyn CostFunction>>) -> Result<Self, EngineError> {
        if graph.node_count() != costs.len() {
            return Err(EngineError::CostCountMismatch { graph: graph.node_count(), costs: costs.len() });
        }
        let dim = costs[0].dimension();
        if costs.iter().any(|c| c.dimension() != dim) {
            return Err(EngineError::DimensionMismatch);
        }
        if !graph.is_strongly_connected() {
            return Err(EngineError::NotStronglyConnected);
        }
        Ok(Self { graph, costs })
    }

    pub fn node_count(&self) -> usize {
        self.costs.len()
    }

    pub fn dimension(&self) -> usize {
        self.costs[0].dimension()
    }

    pub fn cost_refs(&self) -> Vec<&dyn CostFunction> {
        self.costs.iter().map(|c| c.as_ref()).collect()
    }
}

/// Per-node behavior of a broadcast protocol.
pub trait Protocol: Sync {
    type State: Clone + Send;
    type Message;

    fn init(
        &self,
        id: usize,
        cost: &dyn CostFunction,
        x0: &DVector<f64>,
        in_neighbors: &[usize],
    ) -> Result<Self::State, EngineError>;

    fn wake(&self, state: &mut Self::State, cost: &dyn CostFunction, out_degree: usize)
        -> Result<Self::Message, EngineError>;

    fn deliver(&self, state: &mut Self::State, cost: &dyn CostFunction, msg: &Self::Message)
        -> Result<(), EngineError>;

    fn estimate(state: &Self::State) -> &DVector<f64>;
}

fn ranrc_err(e: RanrcError) -> EngineError {
    match e {
        RanrcError::NonFinite | RanrcError::Singular => EngineError::Diverged(0),
        other => EngineError::Ranrc(other),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RanrcProtocol(pub RanrcParams);

impl Protocol for RanrcProtocol {
    type State = NodeState;
    type Message = BroadcastMessage;

    fn init(&self, id: usize, cost: &dyn CostFunction, x0: &DVector<f64>, in_neighbors: &[usize])
        -> Result<NodeState, EngineError> {
        NodeState::initialize(id, cost, x0, in_neighbors).map_err(ranrc_err)
    }

    fn wake(&self, state: &mut NodeState, cost: &dyn CostFunction, out_degree: usize)
        -> Result<BroadcastMessage, EngineError> {
        state.wake_up(cost, &self.0, out_degree).map_err(ranrc_err)
    }

    fn deliver(&self, state: &mut NodeState, cost: &dyn CostFunction, msg: &BroadcastMessage)
        -> Result<(), EngineError> {
        state.receive(cost, &self.0, msg).map_err(ranrc_err)
    }

    fn estimate(state: &NodeState) -> &DVector<f64> {
        &state.x
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SubgradientProtocol(pub SubgradientParams);

impl Protocol for SubgradientProtocol {
    type State = SubgradientNodeState;
    type Message = SgMessage;

    fn init(&self, id: usize, _cost: &dyn CostFunction, x0: &DVector<f64>, _in: &[usize])
        -> Result<SubgradientNodeState, EngineError> {
        Ok(SubgradientNodeState::initialize(id, x0))
    }

    fn wake(&self, state: &mut SubgradientNodeState, cost: &dyn CostFunction, _out_degree: usize)
        -> Result<SgMessage, EngineError> {
        state.broadcast(cost, &self.0).map_err(EngineError::Subgradient)
    }

    fn deliver(&self, state: &mut SubgradientNodeState, cost: &dyn CostFunction, msg: &SgMessage)
        -> Result<(), EngineError> {
        state.receive(cost, &self.0, msg).map_err(EngineError::Subgradient)?;
        if state.x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(EngineError::Diverged(0))
        }
    }

    fn estimate(state: &SubgradientNodeState) -> &DVector<f64> {
        &state.x
    }
}

/// Settings of one simulation independent of the protocol.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub scheduler: SchedulerKind,
    pub loss: LossKind,
    pub events: u64,
    pub scheduler_seed: u64,
    pub loss_seed: u64,
    pub per_node_errors: bool,
    pub snapshot_stride: u64,
}

/// A running network of protocol states.
pub struct Simulator<'a, P: Protocol> {
    network: &'a Network,
    protocol: P,
    states: Vec<P::State>,
    scheduler: Scheduler,
    loss: LossProcess,
    t: u64,
}

impl<'a, P: Protocol> Simulator<'a, P> {
    /// Every node starts from its entry of `x0` (one common point is the
    /// usual choice).
    pub fn new(network: &'a Network, protocol: P, x0: &[DVector<f64>], spec: &RunSpec) -> Result<Self, EngineError> {
        let n = network.node_count();
        let states = (0..n)
            .map(|i| {
                let start = if x0.len() == 1 { &x0[0] } else { &x0[i] };
                protocol.init(i, network.costs[i].as_ref(), start, network.graph.in_neighbors(i))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            network,
            protocol,
            states,
            scheduler: Scheduler::new(spec.scheduler, n, spec.scheduler_seed),
            loss: LossProcess::new(spec.loss, n, spec.loss_seed),
            t: 0,
        })
    }

    pub fn states(&self) -> &[P::State] {
        &self.states
    }

    /// Direct state access for perturbation studies and fault injection.
    pub fn states_mut(&mut self) -> &mut [P::State] {
        &mut self.states
    }

    pub fn events_done(&self) -> u64 {
        self.t
    }

    pub fn estimates(&self) -> Vec<&DVector<f64>> {
        self.states.iter().map(P::estimate).collect()
    }

    /// One event driven by the configured scheduler and loss model. Returns
    /// the triggered node.
    pub fn step(&mut self) -> Result<usize, EngineError> {
        let sigma = self.scheduler.next_node();
        self.t += 1;
        let loss = &mut self.loss;
        execute_event(&self.protocol, self.network, &mut self.states, self.t, sigma, |from, to| {
            loss.delivered(from, to)
        })?;
        if let Some(bound) = self.loss.bound() {
            if self.loss.longest_streak() > bound {
                let (from, to) = self.loss.longest_streak_edge();
                return Err(EngineError::LossBoundViolated { from, to, streak: self.loss.longest_streak(), bound });
            }
        }
        Ok(sigma)
    }

    /// One event with an explicit trigger and delivery decision, for
    /// scripted scenarios.
    pub fn step_with(&mut self, sigma: usize, delivered: impl FnMut(usize, usize) -> bool) -> Result<(), EngineError> {
        self.t += 1;
        execute_event(&self.protocol, self.network, &mut self.states, self.t, sigma, delivered)
    }

    /// Runs `spec.events` events, recording distances to `optimum`.
    pub fn run_recorded(mut self, spec: &RunSpec, optimum: &DVector<f64>) -> Result<TrajectoryRecord, EngineError> {
        let mut record = TrajectoryRecord::default();
        record.rows.reserve(spec.events as usize + 1);
        self.push_row(&mut record, None, spec, optimum);
        while self.t < spec.events {
            match self.step() {
                Ok(sigma) => self.push_row(&mut record, Some(sigma), spec, optimum),
                Err(EngineError::Diverged(t)) => {
                    record.diverged_at = Some(t);
                    let width = if spec.per_node_errors { self.states.len() } else { 0 };
                    for k in t..=spec.events {
                        record.rows.push(TrajectoryRow {
                            t: k,
                            sigma: None,
                            mean_err: f64::INFINITY,
                            max_err: f64::INFINITY,
                            node_errors: vec![f64::INFINITY; width],
                        });
                    }
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(record)
    }

    fn push_row(&self, record: &mut TrajectoryRecord, sigma: Option<usize>, spec: &RunSpec, optimum: &DVector<f64>) {
        let estimates = self.estimates();
        let (mean_err, max_err, errs) = distance_summary(&estimates, optimum);
        record.rows.push(TrajectoryRow {
            t: self.t,
            sigma,
            mean_err,
            max_err,
            node_errors: if spec.per_node_errors { errs } else { Vec::new() },
        });
        if spec.snapshot_stride > 0 && self.t % spec.snapshot_stride == 0 {
            record.snapshots.push((self.t, estimates.into_iter().cloned().collect()));
        }
    }
}

fn execute_event<P: Protocol>(
    protocol: &P,
    network: &Network,
    states: &mut [P::State],
    t: u64,
    sigma: usize,
    mut delivered: impl FnMut(usize, usize) -> bool,
) -> Result<(), EngineError> {
    let stamp = |e: EngineError| match e {
        EngineError::Diverged(_) => EngineError::Diverged(t),
        other => other,
    };
    let outs = network.graph.out_neighbors(sigma);
    let msg = protocol
        .wake(&mut states[sigma], network.costs[sigma].as_ref(), outs.len())
        .map_err(stamp)?;
    for &j in outs {
        if delivered(sigma, j) {
            protocol.deliver(&mut states[j], network.costs[j].as_ref(), &msg).map_err(stamp)?;
        }
    }
    Ok(())
}

/// Conservation residuals of the consensus masses:
///
/// `sum_i y_i + sum_{(i,j)} (b_{i,y} - r^{(i)}_{j,y}) - sum_i g_old_i`
///
/// and its `z`/`h_old` analogue, each as the largest absolute component
/// divided by the largest component of `sum_i |g_old_i|` (resp. `|h_old_i|`).
/// When that scale is zero the raw residual is returned.
pub fn mass_audit(states: &[NodeState], graph: &DirectedGraph) -> (f64, f64) {
    let n = states[0].dimension();
    let mut ry = DVector::<f64>::zeros(n);
    let mut rz = DMatrix::<f64>::zeros(n, n);
    let mut sy = DVector::<f64>::zeros(n);
    let mut sz = DMatrix::<f64>::zeros(n, n);
    for s in states {
        ry += &s.y - &s.g_old;
        rz += &s.z - &s.h_old;
        sy += s.g_old.abs();
        sz += s.h_old.abs();
    }
    for (i, j) in graph.edges() {
        let ledger = &states[j].ledgers[&i];
        ry += &states[i].b_y - &ledger.r_y;
        rz += &states[i].b_z - &ledger.r_z;
    }
    let rel = |res: f64, scale: f64| if scale > 0.0 { res / scale } else { res };
    (rel(ry.amax(), sy.amax()), rel(rz.amax(), sz.amax()))
}

/// Runs `cfg` on an already built network.
pub fn run_on(cfg: &ExperimentConfig, network: &Network, optimum: &DVector<f64>) -> Result<TrajectoryRecord, EngineError> {
    let spec = cfg.run_spec();
    let x0 = vec![DVector::from_element(network.dimension(), cfg.run.x0)];
    match cfg.algorithm.kind {
        AlgorithmKind::Ranrc => {
            let params = cfg.ranrc_params()?;
            Simulator::new(network, RanrcProtocol(params), &x0, &spec)?.run_recorded(&spec, optimum)
        }
        AlgorithmKind::Subgradient => {
            let params = cfg.subgradient_params()?;
            Simulator::new(network, SubgradientProtocol(params), &x0, &spec)?.run_recorded(&spec, optimum)
        }
    }
}

/// Builds the network described by `cfg` and simulates it.
pub fn run(cfg: &ExperimentConfig, optimum: &DVector<f64>) -> Result<TrajectoryRecord, EngineError> {
    let network = cfg.build_network()?;
    run_on(cfg, &network, optimum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Epsilon,
    LossP,
    Alpha,
}

/// `template` with one parameter replaced.
pub fn with_parameter(template: &ExperimentConfig, parameter: SweepParameter, value: f64) -> ExperimentConfig {
    let mut cfg = template.clone();
    match parameter {
        SweepParameter::Epsilon => {
            cfg.algorithm.kind = AlgorithmKind::Ranrc;
            cfg.algorithm.epsilon = value;
        }
        SweepParameter::Alpha => {
            cfg.algorithm.kind = AlgorithmKind::Subgradient;
            cfg.algorithm.alpha = value;
        }
        SweepParameter::LossP => {
            if cfg.loss.kind == LossModelKind::None {
                cfg.loss.kind = LossModelKind::Bernoulli;
            }
            cfg.loss.p = value;
        }
    }
    cfg
}

/// One run per value, all sharing the network and seed derivation. Runs
/// execute in parallel; output order follows `values`.
pub fn sweep(
    template: &ExperimentConfig,
    network: &Network,
    parameter: SweepParameter,
    values: &[f64],
    optimum: &DVector<f64>,
) -> Result<Vec<TrajectoryRecord>, EngineError> {
    if values.is_empty() {
        return Err(EngineError::EmptySweep);
    }
    values
        .par_iter()
        .map(|&v| run_on(&with_parameter(template, parameter, v), network, optimum))
        .collect()
}
