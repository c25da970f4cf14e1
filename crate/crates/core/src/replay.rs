//! Fixed-capacity ring buffer with uniform sampling (with replacement).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    /// True only for terminal transitions; time-limit truncation is not terminal.
    pub done: bool,
}

/// A mini-batch laid out row-major for batched network passes.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs_dim: usize,
    pub states: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<f64>,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(transitions: &[Transition]) -> Result<Self> {
        let obs_dim = transitions.first().map_or(0, |t| t.s.len());
        let mut batch = Batch {
            obs_dim,
            states: Vec::with_capacity(obs_dim * transitions.len()),
            actions: Vec::with_capacity(transitions.len()),
            rewards: Vec::with_capacity(transitions.len()),
            next_states: Vec::with_capacity(obs_dim * transitions.len()),
            dones: Vec::with_capacity(transitions.len()),
        };
        for t in transitions {
            batch.push(t)?;
        }
        Ok(batch)
    }

    fn push(&mut self, t: &Transition) -> Result<()> {
        check_len("transition state", self.obs_dim, t.s.len())?;
        check_len("transition next state", self.obs_dim, t.s_next.len())?;
        self.states.extend_from_slice(&t.s);
        self.next_states.extend_from_slice(&t.s_next);
        self.actions.push(t.a);
        self.rewards.push(t.r);
        self.dones.push(t.done);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    action_count: usize,
    storage: Vec<Transition>,
    // slot the next push overwrites once full
    head: usize,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, action_count: usize, seed: u64) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            action_count,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            head: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        check_len("transition state", self.obs_dim, t.s.len())?;
        check_len("transition next state", self.obs_dim, t.s_next.len())?;
        if t.a >= self.action_count {
            return Err(Error::InvalidAction {
                action: t.a,
                count: self.action_count,
            });
        }
        if !t.r.is_finite() {
            return Err(Error::NonFinite("transition reward"));
        }
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.storage.split_at(self.head);
        older.iter().chain(newer)
    }

    pub fn sample(&mut self, batch_size: usize) -> Result<Vec<Transition>> {
        Ok(self
            .sample_indices(batch_size)?
            .into_iter()
            .map(|i| self.storage[i].clone())
            .collect())
    }

    pub fn sample_batch(&mut self, batch_size: usize) -> Result<Batch> {
        let indices = self.sample_indices(batch_size)?;
        let mut batch = Batch {
            obs_dim: self.obs_dim,
            states: Vec::with_capacity(self.obs_dim * batch_size),
            actions: Vec::with_capacity(batch_size),
            rewards: Vec::with_capacity(batch_size),
            next_states: Vec::with_capacity(self.obs_dim * batch_size),
            dones: Vec::with_capacity(batch_size),
        };
        for i in indices {
            batch.push(&self.storage[i])?;
        }
        Ok(batch)
    }

    fn sample_indices(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        let size = self.storage.len();
        // With replacement, any nonempty buffer can fill a batch of any size.
        if size == 0 {
            return Err(Error::InsufficientData {
                need: batch_size.max(1),
                have: size,
            });
        }
        Ok((0..batch_size)
            .map(|_| self.rng.random_range(0..size))
            .collect())
    }
}
