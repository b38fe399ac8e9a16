//! FIFO replay buffer with uniform sampling.

use std::collections::VecDeque;

use crate::market::Sampler;

/// One stored experience. `discount` is the effective discount applied to
/// the bootstrap term (`gamma^n` for an n-step transition, 0 at terminal).
#[derive(Debug, Clone)]
pub struct StoredTransition {
    pub obs: Vec<f64>,
    pub action: f64,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub done: bool,
    pub discount: f64,
}

#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<StoredTransition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
        }
    }

    pub fn push(&mut self, t: StoredTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, idx: usize) -> &StoredTransition {
        &self.items[idx]
    }

    /// Uniform batch of indices.
    pub fn sample_indices(&self, batch: usize, sampler: &mut Sampler) -> Vec<usize> {
        (0..batch)
            .map(|_| (sampler.uniform() * self.items.len() as f64) as usize % self.items.len())
            .collect()
    }
}
