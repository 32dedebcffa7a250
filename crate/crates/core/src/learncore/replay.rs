use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One environment transition with flattened observations.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition<T> {
    pub state: Vec<T>,
    pub action: usize,
    pub reward: T,
    pub next_state: Vec<T>,
    pub done: bool,
}

/// Fixed-capacity ring buffer. Transitions are stored whole, so a sample
/// never observes a partially written entry.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    obs_dim: usize,
    capacity: usize,
    items: Vec<Transition<T>>,
    cursor: usize,
}

/// Column-major view of a sampled minibatch.
#[derive(Clone, Debug, Default)]
pub struct SampledBatch<T> {
    pub states: Vec<T>,
    pub actions: Vec<usize>,
    pub rewards: Vec<T>,
    pub next_states: Vec<T>,
    pub dones: Vec<bool>,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize, obs_dim: usize) -> Result<Self> {
        if capacity == 0 || obs_dim == 0 {
            return Err(Error::invalid("replay buffer needs positive capacity and obs dim"));
        }
        Ok(Self {
            obs_dim,
            capacity,
            items: Vec::new(),
            cursor: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn push(&mut self, t: Transition<T>) -> Result<()> {
        for len in [t.state.len(), t.next_state.len()] {
            if len != self.obs_dim {
                return Err(Error::DimensionMismatch {
                    expected: self.obs_dim,
                    actual: len,
                });
            }
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<SampledBatch<T>> {
        if batch_size == 0 || self.items.len() < batch_size {
            return Err(Error::InsufficientData {
                needed: batch_size,
                actual: self.items.len(),
            });
        }
        let mut b = SampledBatch {
            states: Vec::with_capacity(batch_size * self.obs_dim),
            actions: Vec::with_capacity(batch_size),
            rewards: Vec::with_capacity(batch_size),
            next_states: Vec::with_capacity(batch_size * self.obs_dim),
            dones: Vec::with_capacity(batch_size),
        };
        for _ in 0..batch_size {
            let t = &self.items[rng.random_range(0..self.items.len())];
            b.states.extend_from_slice(&t.state);
            b.actions.push(t.action);
            b.rewards.push(t.reward);
            b.next_states.extend_from_slice(&t.next_state);
            b.dones.push(t.done);
        }
        Ok(b)
    }
}
