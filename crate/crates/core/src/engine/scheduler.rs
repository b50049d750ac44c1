use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    /// Independent uniform draw of the triggering node at every event.
    #[default]
    UniformRandom,
    /// Event `t` triggers node `t mod N`; every node fires once per `N` events.
    RoundRobin,
}

/// Produces the sequence of triggered nodes, one per broadcast event.
#[derive(Debug, Clone)]
pub struct Scheduler {
    kind: SchedulerKind,
    nodes: usize,
    rng: ChaCha8Rng,
    t: u64,
}

impl Scheduler {
    pub fn new(kind: SchedulerKind, nodes: usize, seed: u64) -> Self {
        Self { kind, nodes, rng: ChaCha8Rng::seed_from_u64(seed), t: 0 }
    }

    pub fn kind(&self) -> SchedulerKind {
        self.kind
    }

    pub fn next_node(&mut self) -> usize {
        self.t += 1;
        match self.kind {
            SchedulerKind::UniformRandom => self.rng.gen_range(0..self.nodes),
            SchedulerKind::RoundRobin => (self.t % self.nodes as u64) as usize,
        }
    }
}
