//! Bounded FIFO replay buffer over joint multi-agent transitions, with
//! uniform minibatch sampling.

use crate::heads::HybridAction;
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("capacity must be positive")]
    ZeroCapacity,
    #[error("transition field {field} has {got} entries, buffer expects {expected}")]
    AgentCount {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("observation for agent {agent} has {got} values, expected {expected}")]
    ObsWidth {
        agent: usize,
        expected: usize,
        got: usize,
    },
    #[error("cannot sample {requested} transitions from {available}")]
    NotEnough { requested: usize, available: usize },
    #[error("non-finite value in transition")]
    NonFinite,
}

/// One joint step: everything every agent saw, did and received.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observations: Vec<Vec<f64>>,
    pub actions: Vec<HybridAction>,
    pub rewards: Vec<f64>,
    pub next_observations: Vec<Vec<f64>>,
    pub done: bool,
}

/// Ring buffer that overwrites the oldest joint transition once full and
/// samples uniformly with replacement.
pub struct ReplayBuffer {
    capacity: usize,
    obs_dims: Vec<usize>,
    storage: Vec<Transition>,
    next_slot: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dims: Vec<usize>) -> Result<Self, ReplayError> {
        if capacity == 0 {
            return Err(ReplayError::ZeroCapacity);
        }
        Ok(ReplayBuffer {
            capacity,
            obs_dims,
            storage: Vec::new(),
            next_slot: 0,
            pushed: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Total number of pushes ever made, including overwritten ones.
    pub fn pushed(&self) -> u64 {
        self.pushed
    }

    fn validate(&self, t: &Transition) -> Result<(), ReplayError> {
        let n = self.obs_dims.len();
        let check = |field: &'static str, got: usize| {
            if got != n {
                Err(ReplayError::AgentCount {
                    field,
                    expected: n,
                    got,
                })
            } else {
                Ok(())
            }
        };
        check("observations", t.observations.len())?;
        check("actions", t.actions.len())?;
        check("rewards", t.rewards.len())?;
        check("next_observations", t.next_observations.len())?;
        for (agent, dim) in self.obs_dims.iter().enumerate() {
            for obs in [&t.observations[agent], &t.next_observations[agent]] {
                if obs.len() != *dim {
                    return Err(ReplayError::ObsWidth {
                        agent,
                        expected: *dim,
                        got: obs.len(),
                    });
                }
                if !obs.iter().all(|v| v.is_finite()) {
                    return Err(ReplayError::NonFinite);
                }
            }
        }
        if !t.rewards.iter().all(|v| v.is_finite()) {
            return Err(ReplayError::NonFinite);
        }
        for a in &t.actions {
            if !a.continuous.iter().all(|v| v.is_finite()) {
                return Err(ReplayError::NonFinite);
            }
        }
        Ok(())
    }

    /// Appends a transition, evicting the oldest one once at capacity.
    pub fn push(&mut self, t: Transition) -> Result<(), ReplayError> {
        self.validate(&t)?;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.next_slot] = t;
        }
        self.next_slot = (self.next_slot + 1) % self.capacity;
        self.pushed += 1;
        Ok(())
    }

    /// Uniform sample with replacement; deterministic given the RNG state.
    pub fn sample<R: Rng>(
        &self,
        batch_size: usize,
        rng: &mut R,
    ) -> Result<Vec<&Transition>, ReplayError> {
        if batch_size == 0 || self.storage.is_empty() {
            return Err(ReplayError::NotEnough {
                requested: batch_size,
                available: self.storage.len(),
            });
        }
        Ok((0..batch_size)
            .map(|_| &self.storage[rng.gen_range(0..self.storage.len())])
            .collect())
    }

    /// Oldest-to-newest iteration order, for inspection in tests.
    pub fn iter_ordered(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            self.next_slot
        };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }
}
