use std::collections::VecDeque;

use super::Transition;
use crate::numkit::Rng;

/// Fixed-capacity FIFO of transitions with uniform minibatch sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
    rng: Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, rng: Rng) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: VecDeque::with_capacity(capacity.min(4096)),
            rng,
        }
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// `size` distinct transitions, or `None` while the buffer holds fewer.
    pub fn sample(&mut self, size: usize) -> Option<Vec<&Transition>> {
        if size > self.items.len() {
            return None;
        }
        let idx = self.rng.sample_indices(self.items.len(), size);
        Some(idx.into_iter().map(|i| &self.items[i]).collect())
    }
}
