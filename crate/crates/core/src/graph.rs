//! Fixed directed communication topologies.
//!
//! An edge `(i, j)` means node `j` receives the broadcasts of node `i`.
//! Graphs are immutable once built and can be shared freely between runs.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("edge ({from}, {to}) has an endpoint outside 0..{n}")]
    OutOfRange { from: usize, to: usize, n: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),
    #[error("graph must have at least one node")]
    Empty,
    #[error("connectivity radius {0} outside (0, sqrt(2)]")]
    BadRadius(f64),
    #[error("no strongly connected sample within {0} seeds")]
    NoConnectedSample(u64),
    #[error("edge list line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("io error: {0}")]
    Io(String),
}

/// A directed graph on nodes `0..n` without self-loops or parallel edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl DirectedGraph {
    pub fn from_edge_list(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut seen = BTreeSet::new();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for &(from, to) in edges {
            if from >= n || to >= n {
                return Err(GraphError::OutOfRange { from, to, n });
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if !seen.insert((from, to)) {
                return Err(GraphError::DuplicateEdge(from, to));
            }
            out[from].push(to);
            inc[to].push(from);
        }
        for list in out.iter_mut().chain(inc.iter_mut()) {
            list.sort_unstable();
        }
        Ok(Self { n, out, inc })
    }

    /// Directed cycle `0 -> 1 -> ... -> n-1 -> 0`.
    pub fn ring(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).filter(|(a, b)| a != b).collect();
        Self::from_edge_list(n, &edges)
    }

    /// Every ordered pair of distinct nodes.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Self::from_edge_list(n, &edges)
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(Vec::len).sum()
    }

    /// Receivers of node `i`, ascending.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out[i]
    }

    /// Senders heard by node `i`, ascending.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.inc[i]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        from < self.n && self.out[from].binary_search(&to).is_ok()
    }

    /// All edges in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(i, outs)| outs.iter().map(move |&j| (i, j)))
    }

    /// Forward and backward reachability from node 0 both cover the graph.
    pub fn is_strongly_connected(&self) -> bool {
        reaches_all(&self.out) && reaches_all(&self.inc)
    }

    /// Serializes to the `n=<N>` header plus one `i j` line per edge.
    pub fn to_edge_list_text(&self) -> String {
        let mut s = format!("n={}\n", self.n);
        for (i, j) in self.edges() {
            let _ = writeln!(s, "{i} {j}");
        }
        s
    }

    pub fn parse_edge_list_text(text: &str) -> Result<Self, GraphError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(k, l)| (k + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(GraphError::Parse {
            line: 1,
            reason: "missing `n=<N>` header".into(),
        })?;
        let n = header
            .strip_prefix("n=")
            .and_then(|v| v.trim().parse::<usize>().ok())
            .ok_or_else(|| GraphError::Parse {
                line: hline,
                reason: format!("expected `n=<N>`, found `{header}`"),
            })?;
        let mut edges = Vec::new();
        for (line, l) in lines {
            let mut parts = l.split_whitespace().map(str::parse::<usize>);
            match (parts.next(), parts.next(), parts.next()) {
                (Some(Ok(i)), Some(Ok(j)), None) => edges.push((i, j)),
                _ => {
                    return Err(GraphError::Parse {
                        line,
                        reason: format!("expected `i j`, found `{l}`"),
                    })
                }
            }
        }
        Self::from_edge_list(n, &edges)
    }

    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(e.to_string()))?;
        Self::parse_edge_list_text(&text)
    }
}

fn reaches_all(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == adj.len()
}

/// Samples `n` points uniformly in the unit square and joins every pair at
/// Euclidean distance at most `radius` with edges in both directions.
pub fn random_geometric_digraph(
    n: usize,
    radius: f64,
    rng: &mut impl Rng,
) -> Result<DirectedGraph, GraphError> {
    if !(radius > 0.0 && radius <= std::f64::consts::SQRT_2) {
        return Err(GraphError::BadRadius(radius));
    }
    let points: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect();
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (dx, dy) = (points[i].0 - points[j].0, points[i].1 - points[j].1);
            if dx * dx + dy * dy <= r2 {
                edges.push((i, j));
            }
        }
    }
    DirectedGraph::from_edge_list(n, &edges)
}

/// Rejection-samples geometric graphs with seeds `seed, seed+1, ...` until
/// one is strongly connected. Returns the graph and the accepted seed.
pub fn connected_random_geometric(
    n: usize,
    radius: f64,
    seed: u64,
    max_attempts: u64,
) -> Result<(DirectedGraph, u64), GraphError> {
    for k in 0..max_attempts {
        let s = seed.wrapping_add(k);
        let g = random_geometric_digraph(n, radius, &mut ChaCha8Rng::seed_from_u64(s))?;
        if g.is_strongly_connected() {
            return Ok((g, s));
        }
    }
    Err(GraphError::NoConnectedSample(max_attempts))
}

/// Random strongly connected digraph: a shuffled Hamiltonian cycle plus each
/// remaining ordered pair independently with probability `extra_p`.
pub fn random_strongly_connected_digraph(
    n: usize,
    extra_p: f64,
    rng: &mut impl Rng,
) -> Result<DirectedGraph, GraphError> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut set = BTreeSet::new();
    if n > 1 {
        for k in 0..n {
            set.insert((order[k], order[(k + 1) % n]));
        }
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && !set.contains(&(i, j)) && rng.gen::<f64>() < extra_p {
                set.insert((i, j));
            }
        }
    }
    let edges: Vec<_> = set.into_iter().collect();
    DirectedGraph::from_edge_list(n, &edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_strongly_connected() {
        let g = DirectedGraph::from_edge_list(2, &[(0, 1), (1, 0)]).unwrap();
        assert!(g.is_strongly_connected());
        assert_eq!(g.out_neighbors(0), &[1]);
        assert_eq!(g.in_neighbors(0), &[1]);
    }

    #[test]
    fn three_cycle() {
        let g = DirectedGraph::from_edge_list(3, &[(0, 1), (1, 2), (2, 0)]).unwrap();
        assert!(g.is_strongly_connected());
        assert_eq!(g, DirectedGraph::ring(3).unwrap());
        assert_eq!(g.in_neighbors(0), &[2]);
    }

    #[test]
    fn rejects_bad_edges() {
        assert_eq!(
            DirectedGraph::from_edge_list(2, &[(0, 0)]),
            Err(GraphError::SelfLoop(0))
        );
        assert_eq!(
            DirectedGraph::from_edge_list(2, &[(0, 2)]),
            Err(GraphError::OutOfRange { from: 0, to: 2, n: 2 })
        );
        assert_eq!(
            DirectedGraph::from_edge_list(2, &[(0, 1), (0, 1)]),
            Err(GraphError::DuplicateEdge(0, 1))
        );
    }

    #[test]
    fn one_way_pair_not_connected() {
        let g = DirectedGraph::from_edge_list(2, &[(0, 1)]).unwrap();
        assert!(!g.is_strongly_connected());
    }

    #[test]
    fn geometric_is_deterministic() {
        let a = random_geometric_digraph(15, 0.35, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = random_geometric_digraph(15, 0.35, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn huge_radius_gives_complete_graph() {
        let g = random_geometric_digraph(2, std::f64::consts::SQRT_2, &mut ChaCha8Rng::seed_from_u64(3))
            .unwrap();
        assert_eq!(g, DirectedGraph::complete(2).unwrap());
        assert!(random_geometric_digraph(2, 1.5, &mut ChaCha8Rng::seed_from_u64(3)).is_err());
    }

    #[test]
    fn rejection_sampling_yields_connected() {
        let (g, _) = connected_random_geometric(15, 0.35, 0, 1000).unwrap();
        assert!(g.is_strongly_connected());
    }

    #[test]
    fn edge_list_text_round_trip() {
        let g = DirectedGraph::from_edge_list(4, &[(0, 1), (1, 2), (2, 3), (3, 0), (2, 0)]).unwrap();
        let text = g.to_edge_list_text();
        assert!(text.starts_with("n=4\n"));
        assert_eq!(DirectedGraph::parse_edge_list_text(&text).unwrap(), g);
        assert!(matches!(
            DirectedGraph::parse_edge_list_text("n=3\n0 x\n"),
            Err(GraphError::Parse { line: 2, .. })
        ));
    }
}
