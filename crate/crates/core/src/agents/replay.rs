use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// A complete token sequence and the reward it received.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub tokens: Vec<usize>,
    pub reward: f64,
}

/// FIFO episode store with uniform sampling with replacement.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    store: VecDeque<Episode>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            store: VecDeque::with_capacity(capacity.min(1 << 16)),
            inserted: 0,
        }
    }

    /// Appends, evicting the oldest episode when full.
    pub fn push(&mut self, episode: Episode) {
        if self.store.len() == self.capacity {
            self.store.pop_front();
        }
        self.store.push_back(episode);
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn total_inserted(&self) -> u64 {
        self.inserted
    }

    pub fn iter(&self) -> impl Iterator<Item = &Episode> {
        self.store.iter()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Episode> {
        if self.store.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| self.store[rng.random_range(0..self.store.len())].clone())
            .collect()
    }
}
