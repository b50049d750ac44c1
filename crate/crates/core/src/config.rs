//! Experiment configuration.
//!
//! A config is a TOML file with the one-level sections `graph`, `cost`,
//! `algorithm`, `loss`, `scheduler`, `run` and, for the CLI sweeps, `sweep`
//! and `compare`. Every key has a default; unknown keys are rejected.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::costs::{load_csv_dataset, partition_dataset, CostFunction, QuadraticCost, SmoothHuberRegressionCost};
use crate::engine::{derive_seed, BoundedPattern, LossKind, Network, RunSpec, SchedulerKind};
use crate::graph::{connected_random_geometric, DirectedGraph};
use crate::ranrc::{symmetrize, RanrcParams};
use crate::subgradient::{default_alpha_grid, SubgradientParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("building network: {0}")]
    Build(String),
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.into(), reason: reason.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GraphKind {
    /// Random geometric graph in the unit square, rejection-sampled until
    /// strongly connected.
    #[default]
    Geometric,
    Ring,
    Complete,
    /// Edge list file (`n=<N>` header, one `i j` per line).
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub kind: GraphKind,
    pub nodes: usize,
    pub radius: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub max_attempts: u64,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self { kind: GraphKind::Geometric, nodes: 15, radius: 0.35, path: None, max_attempts: 10_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CostFamily {
    /// Random quadratics `w_i/2 |x - a_i|^2` (matrix-weighted when
    /// `dimension > 1`).
    #[default]
    Quadratic,
    /// Smooth Huber regression on a CSV table split among the nodes.
    Huber,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostSection {
    pub family: CostFamily,
    pub dimension: usize,
    pub weight_min: f64,
    pub weight_max: f64,
    pub center_min: f64,
    pub center_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    pub feature_columns: Vec<usize>,
    pub target_column: usize,
    pub max_rows: usize,
    pub beta: f64,
    pub gamma: f64,
    pub ridge_intercept: bool,
}

impl Default for CostSection {
    fn default() -> Self {
        Self {
            family: CostFamily::Quadratic,
            dimension: 1,
            weight_min: 0.5,
            weight_max: 2.0,
            center_min: -5.0,
            center_max: 5.0,
            data: None,
            feature_columns: (0..9).collect(),
            target_column: 13,
            max_rows: 500,
            beta: 1.0,
            gamma: 1.0,
            ridge_intercept: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    #[default]
    Ranrc,
    Subgradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlgorithmSection {
    pub kind: AlgorithmKind,
    pub epsilon: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub value_sum_update: bool,
}

impl Default for AlgorithmSection {
    fn default() -> Self {
        Self {
            kind: AlgorithmKind::Ranrc,
            epsilon: 0.01,
            threshold: RanrcParams::DEFAULT_THRESHOLD,
            alpha: 0.01,
            value_sum_update: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LossModelKind {
    None,
    #[default]
    Bernoulli,
    Bounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundedPatternKind {
    #[default]
    Periodic,
    CappedBernoulli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub kind: LossModelKind,
    /// Failure probability for `bernoulli` and `bounded`/`capped_bernoulli`.
    pub p: f64,
    pub max_consecutive: u32,
    pub pattern: BoundedPatternKind,
}

impl Default for LossSection {
    fn default() -> Self {
        Self { kind: LossModelKind::Bernoulli, p: 0.1, max_consecutive: 3, pattern: BoundedPatternKind::Periodic }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerSection {
    pub kind: SchedulerKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub events: u64,
    pub seed: u64,
    /// Common initial estimate, repeated in every coordinate.
    pub x0: f64,
    pub per_node_errors: bool,
    pub snapshot_stride: u64,
    pub oracle_tol: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { events: 10_000, seed: 1, x0: 0.0, per_node_errors: false, snapshot_stride: 0, oracle_tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Values for `sweep-eps` / `sweep-loss`; empty means the defaults.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub epsilon_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
}

/// `{1e-4, 1e-1}` in half-decade steps.
pub fn default_epsilon_grid() -> Vec<f64> {
    (0..=6).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect()
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { epsilon_grid: default_epsilon_grid(), alpha_grid: default_alpha_grid() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub graph: GraphSection,
    pub cost: CostSection,
    pub algorithm: AlgorithmSection,
    pub loss: LossSection,
    pub scheduler: SchedulerSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub compare: CompareSection,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`; relative data and graph paths are taken relative to the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Read { path: path.to_owned(), reason: e.to_string() })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.cost.data);
        resolve(base, &mut cfg.graph.path);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the serialized config.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.graph;
        if g.nodes == 0 && g.kind != GraphKind::File {
            return Err(ConfigError::invalid("graph.nodes", "must be at least 1"));
        }
        if g.kind == GraphKind::Geometric && !(g.radius > 0.0 && g.radius <= std::f64::consts::SQRT_2) {
            return Err(ConfigError::invalid("graph.radius", "must lie in (0, sqrt(2)]"));
        }
        if g.kind == GraphKind::File && g.path.is_none() {
            return Err(ConfigError::invalid("graph.path", "required when graph.kind = \"file\""));
        }
        let c = &self.cost;
        if c.dimension == 0 {
            return Err(ConfigError::invalid("cost.dimension", "must be at least 1"));
        }
        if !(c.weight_min > 0.0 && c.weight_min <= c.weight_max) {
            return Err(ConfigError::invalid("cost.weight_min", "need 0 < weight_min <= weight_max"));
        }
        if c.center_min > c.center_max {
            return Err(ConfigError::invalid("cost.center_min", "must not exceed center_max"));
        }
        if !(c.beta > 0.0) {
            return Err(ConfigError::invalid("cost.beta", "must be > 0"));
        }
        if !(c.gamma >= 0.0) {
            return Err(ConfigError::invalid("cost.gamma", "must be >= 0"));
        }
        if c.family == CostFamily::Huber && c.data.is_none() {
            return Err(ConfigError::invalid("cost.data", "required when cost.family = \"huber\""));
        }
        self.ranrc_params()?;
        self.subgradient_params()?;
        self.loss_kind().validate().map_err(|r| ConfigError::invalid("loss.p", r))?;
        if !(self.run.oracle_tol > 0.0) {
            return Err(ConfigError::invalid("run.oracle_tol", "must be > 0"));
        }
        if !self.run.x0.is_finite() {
            return Err(ConfigError::invalid("run.x0", "must be finite"));
        }
        Ok(())
    }

    pub fn ranrc_params(&self) -> Result<RanrcParams, ConfigError> {
        let a = &self.algorithm;
        if !(0.0..=1.0).contains(&a.epsilon) {
            return Err(ConfigError::invalid("algorithm.epsilon", "must lie in [0, 1]"));
        }
        RanrcParams::new(a.epsilon, a.threshold).map_err(|e| ConfigError::invalid("algorithm.threshold", e.to_string()))
    }

    pub fn subgradient_params(&self) -> Result<SubgradientParams, ConfigError> {
        SubgradientParams::new(self.algorithm.alpha, self.algorithm.value_sum_update)
            .map_err(|e| ConfigError::invalid("algorithm.alpha", e.to_string()))
    }

    pub fn loss_kind(&self) -> LossKind {
        let l = &self.loss;
        match l.kind {
            LossModelKind::None => LossKind::None,
            LossModelKind::Bernoulli => LossKind::Bernoulli { p: l.p },
            LossModelKind::Bounded => LossKind::Bounded {
                max_consecutive: l.max_consecutive,
                pattern: match l.pattern {
                    BoundedPatternKind::Periodic => BoundedPattern::Periodic,
                    BoundedPatternKind::CappedBernoulli => BoundedPattern::CappedBernoulli { p: l.p },
                },
            },
        }
    }

    pub fn run_spec(&self) -> RunSpec {
        let seed = self.run.seed;
        RunSpec {
            scheduler: self.scheduler.kind,
            loss: self.loss_kind(),
            events: self.run.events,
            scheduler_seed: derive_seed(seed, "scheduler", 0),
            loss_seed: derive_seed(seed, "loss", 0),
            per_node_errors: self.run.per_node_errors,
            snapshot_stride: self.run.snapshot_stride,
        }
    }

    pub fn build_graph(&self) -> Result<DirectedGraph, ConfigError> {
        let g = &self.graph;
        let built = match g.kind {
            GraphKind::Geometric => connected_random_geometric(
                g.nodes,
                g.radius,
                derive_seed(self.run.seed, "graph", 0),
                g.max_attempts,
            )
            .map(|(graph, _)| graph),
            GraphKind::Ring => DirectedGraph::ring(g.nodes),
            GraphKind::Complete => DirectedGraph::complete(g.nodes),
            GraphKind::File => DirectedGraph::load(g.path.as_deref().expect("validated")),
        };
        built.map_err(|e| ConfigError::Build(e.to_string()))
    }

    pub fn build_costs(&self, nodes: usize) -> Result<Vec<Arc<dyn CostFunction>>, ConfigError> {
        let c = &self.cost;
        let build = |e: String| ConfigError::Build(e);
        match c.family {
            CostFamily::Quadratic => (0..nodes)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.run.seed, "costs", i as u64));
                    random_quadratic(c, &mut rng).map(|q| Arc::new(q) as Arc<dyn CostFunction>)
                })
                .collect(),
            CostFamily::Huber => {
                let path = c.data.as_deref().expect("validated");
                let data = load_csv_dataset(path, &c.feature_columns, c.target_column)
                    .map_err(|e| build(e.to_string()))?
                    .truncated(c.max_rows);
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.run.seed, "partition", 0));
                let parts = partition_dataset(&data, nodes, &mut rng).map_err(|e| build(e.to_string()))?;
                parts
                    .iter()
                    .map(|p| {
                        SmoothHuberRegressionCost::new(p, c.beta, c.gamma, c.ridge_intercept)
                            .map(|h| Arc::new(h) as Arc<dyn CostFunction>)
                            .map_err(|e| build(e.to_string()))
                    })
                    .collect()
            }
        }
    }

    pub fn build_network(&self) -> Result<Network, ConfigError> {
        let graph = self.build_graph()?;
        let costs = self.build_costs(graph.node_count())?;
        Network::new(graph, costs).map_err(|e| ConfigError::Build(e.to_string()))
    }
}

fn random_quadratic(c: &CostSection, rng: &mut impl Rng) -> Result<QuadraticCost, ConfigError> {
    let n = c.dimension;
    let mut draw = |lo: f64, hi: f64| if lo == hi { lo } else { rng.gen_range(lo..hi) };
    let eigen: Vec<f64> = (0..n).map(|_| draw(c.weight_min, c.weight_max)).collect();
    let center = DVector::from_iterator(n, (0..n).map(|_| draw(c.center_min, c.center_max)));
    let weight = if n == 1 {
        DMatrix::from_element(1, 1, eigen[0])
    } else {
        let basis = DMatrix::from_iterator(n, n, (0..n * n).map(|_| draw(-1.0, 1.0))).qr().q();
        let mut w = &basis * DMatrix::from_diagonal(&DVector::from_vec(eigen)) * basis.transpose();
        symmetrize(&mut w);
        w
    };
    QuadraticCost::new(weight, center).map_err(|e| ConfigError::Build(e.to_string()))
}
