use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// How a bounded-loss model places its failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundedPattern {
    /// Each edge fails `L` times in a row, then delivers once, with a per-edge
    /// phase offset. The worst case allowed by the bound.
    Periodic,
    /// Independent failures with probability `p`, except that a delivery is
    /// forced after `L` consecutive failures.
    CappedBernoulli { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    None,
    /// Each (broadcast, receiver) delivery fails independently with
    /// probability `p` in `[0, 1)`.
    Bernoulli { p: f64 },
    /// At most `max_consecutive` failures in a row on every directed edge.
    Bounded { max_consecutive: u32, pattern: BoundedPattern },
}

impl LossKind {
    pub fn validate(&self) -> Result<(), String> {
        let check_p = |p: f64| {
            if (0.0..1.0).contains(&p) {
                Ok(())
            } else {
                Err(format!("loss probability {p} outside [0, 1)"))
            }
        };
        match *self {
            LossKind::None => Ok(()),
            LossKind::Bernoulli { p } => check_p(p),
            LossKind::Bounded { pattern: BoundedPattern::CappedBernoulli { p }, .. } => {
                if (0.0..=1.0).contains(&p) {
                    Ok(())
                } else {
                    Err(format!("loss probability {p} outside [0, 1]"))
                }
            }
            LossKind::Bounded { .. } => Ok(()),
        }
    }
}

/// Stateful delivery oracle for one run.
#[derive(Debug, Clone)]
pub struct LossProcess {
    kind: LossKind,
    nodes: usize,
    rng: ChaCha8Rng,
    attempts: Vec<u64>,
    streak: Vec<u32>,
    longest_streak: u32,
    longest_edge: (usize, usize),
}

impl LossProcess {
    pub fn new(kind: LossKind, nodes: usize, seed: u64) -> Self {
        Self {
            kind,
            nodes,
            rng: ChaCha8Rng::seed_from_u64(seed),
            attempts: vec![0; nodes * nodes],
            streak: vec![0; nodes * nodes],
            longest_streak: 0,
            longest_edge: (0, 0),
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    /// Decides whether the broadcast from `from` reaches `to`.
    pub fn delivered(&mut self, from: usize, to: usize) -> bool {
        let e = from * self.nodes + to;
        let attempt = self.attempts[e];
        self.attempts[e] += 1;
        let fail = match self.kind {
            LossKind::None => false,
            LossKind::Bernoulli { p } => self.rng.gen::<f64>() < p,
            LossKind::Bounded { max_consecutive, pattern } => {
                let period = u64::from(max_consecutive) + 1;
                match pattern {
                    BoundedPattern::Periodic => (attempt + e as u64) % period != u64::from(max_consecutive),
                    BoundedPattern::CappedBernoulli { p } => {
                        let draw = self.rng.gen::<f64>() < p;
                        draw && self.streak[e] < max_consecutive
                    }
                }
            }
        };
        if fail {
            self.streak[e] += 1;
            if self.streak[e] > self.longest_streak {
                self.longest_streak = self.streak[e];
                self.longest_edge = (from, to);
            }
        } else {
            self.streak[e] = 0;
        }
        !fail
    }

    /// Longest run of consecutive failures seen on any edge so far.
    pub fn longest_streak(&self) -> u32 {
        self.longest_streak
    }

    /// Edge on which [`Self::longest_streak`] occurred.
    pub fn longest_streak_edge(&self) -> (usize, usize) {
        self.longest_edge
    }

    /// `Some(L)` for bounded models.
    pub fn bound(&self) -> Option<u32> {
        match self.kind {
            LossKind::Bounded { max_consecutive, .. } => Some(max_consecutive),
            _ => None,
        }
    }
}
