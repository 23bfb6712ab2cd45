//! Bounded FIFO experience replay with uniform sampling.

use rand::Rng;

use crate::state::StateVector;
use crate::{Error, Result, SimRng};

pub const DEFAULT_CAPACITY: usize = 1_000_000;

/// One `(s, a, r, s', done)` record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: StateVector,
    pub action: usize,
    pub reward: f64,
    pub next_state: StateVector,
    pub done: bool,
}

/// Ring buffer that evicts the oldest item once `capacity` is reached.
#[derive(Debug, Clone)]
pub struct ReplayMemory<T = Transition> {
    capacity: usize,
    items: Vec<T>,
    // Slot holding the oldest item once the buffer is full.
    head: usize,
}

impl<T> ReplayMemory<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::invalid("replay capacity must be positive"));
        }
        Ok(ReplayMemory {
            capacity,
            items: Vec::new(),
            head: 0,
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

    pub fn push(&mut self, item: T) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.head] = item;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Items from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &T> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// `batch` items drawn uniformly with replacement.
    pub fn sample_uniform(&self, batch: usize, rng: &mut SimRng) -> Result<Vec<&T>> {
        if batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.items.len() < batch {
            return Err(Error::invalid(format!(
                "replay holds {} items, batch needs {batch}",
                self.items.len()
            )));
        }
        Ok((0..batch)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect())
    }
}
