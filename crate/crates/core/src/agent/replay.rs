use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AgentError, Result};

/// One environment step. Images are stored as raw gray levels; the reward
/// is the raw extrinsic value, intrinsic reward is recomputed when sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub image: Vec<u8>,
    pub touch: Vec<f64>,
    pub action: Vec<f64>,
    pub extrinsic_reward: f64,
    pub next_image: Vec<u8>,
    pub next_touch: Vec<f64>,
    /// True only for terminal states (success or failure), not time limits.
    pub done: bool,
}

/// Fixed-capacity FIFO ring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    /// Slot the next push overwrites once full.
    head: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(AgentError::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::new(),
            head: 0,
            pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Transitions ever pushed, including evicted ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        self.pushed += 1;
    }

    /// Oldest-first view.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items[self.head..].iter().chain(&self.items[..self.head])
    }

    /// Slot `i` in storage order (not age order).
    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    /// `n` slot indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(AgentError::EmptyBuffer);
        }
        if n > self.items.len() {
            return Err(AgentError::SampleTooLarge {
                requested: n,
                size: self.items.len(),
            });
        }
        Ok((0..n).map(|_| rng.random_range(0..self.items.len())).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Transition>> {
        Ok(self
            .sample_indices(n, rng)?
            .into_iter()
            .map(|i| &self.items[i])
            .collect())
    }
}
