//! Robust asynchronous Newton-Raphson consensus for distributed convex
//! optimization over directed, lossy broadcast networks, with a distributed
//! subgradient baseline, centralized reference solvers and a deterministic
//! event simulator.

pub mod cli;
pub mod config;
pub mod costs;
pub mod engine;
pub mod graph;
pub mod oracle;
pub mod ranrc;
pub mod subgradient;

pub use config::ExperimentConfig;
pub use costs::CostFunction;
pub use engine::{mass_audit, run, sweep, Network, Simulator, TrajectoryRecord};
pub use graph::DirectedGraph;
pub use oracle::{newton_minimize, OracleResult};
pub use ranrc::{BroadcastMessage, NodeState, RanrcParams};
