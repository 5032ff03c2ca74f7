//! Experience replay split into a priority pool (positive reward) and a
//! regular pool, each evicting oldest-first.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::engine::Command;

/// Anything that can decide which pool it belongs to.
pub trait Prioritized {
    fn priority(&self) -> bool;
}

/// One stored step of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<str>,
    pub command: Command,
    pub reward: f64,
    pub next_state: Arc<str>,
    /// Arguments cued at the next state; the target's max ranges over these.
    pub next_objects: Arc<[usize]>,
    pub terminal: bool,
}

impl Prioritized for Transition {
    /// Priority exactly when the reward is positive.
    fn priority(&self) -> bool {
        self.reward > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// A fixed fraction of each minibatch comes from the priority pool.
    #[default]
    Prioritized,
    /// Uniform over all stored transitions, ignoring pools.
    Uniform,
}

impl std::str::FromStr for SamplingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "prioritized" => Ok(Self::Prioritized),
            "uniform" => Ok(Self::Uniform),
            _ => Err(format!("unknown sampling mode `{s}` (expected prioritized or uniform)")),
        }
    }
}

impl std::fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Prioritized => "prioritized",
            Self::Uniform => "uniform",
        })
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("cannot sample from an empty replay memory")]
pub struct EmptyMemory;

#[derive(Debug, Clone)]
pub struct ReplayMemory<T = Transition> {
    priority: VecDeque<T>,
    regular: VecDeque<T>,
    capacity: usize,
}

impl<T: Prioritized> ReplayMemory<T> {
    /// `capacity` bounds the two pools together.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "replay capacity must be at least 1");
        Self {
            priority: VecDeque::new(),
            regular: VecDeque::new(),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.priority.len() + self.regular.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn priority_pool(&self) -> &VecDeque<T> {
        &self.priority
    }

    pub fn regular_pool(&self) -> &VecDeque<T> {
        &self.regular
    }

    /// Appends to the pool chosen by the item's priority. When full, the
    /// oldest item of that pool is evicted (or of the other pool, if this
    /// one is empty).
    pub fn store(&mut self, item: T) {
        let high = item.priority();
        if self.len() == self.capacity {
            let (own, other) = if high {
                (&mut self.priority, &mut self.regular)
            } else {
                (&mut self.regular, &mut self.priority)
            };
            if own.pop_front().is_none() {
                other.pop_front();
            }
        }
        if high {
            self.priority.push_back(item);
        } else {
            self.regular.push_back(item);
        }
    }

    /// Draws `batch` items with replacement. In prioritized mode
    /// `round(rho·batch)` come from the priority pool and the rest from the
    /// regular pool; an empty pool hands its share to the other one.
    pub fn sample(
        &self,
        batch: usize,
        rho: f64,
        mode: SamplingMode,
        rng: &mut impl Rng,
    ) -> Result<Vec<&T>, EmptyMemory> {
        if self.is_empty() {
            return Err(EmptyMemory);
        }
        let mut out = Vec::with_capacity(batch);
        match mode {
            SamplingMode::Uniform => {
                let n = self.len();
                for _ in 0..batch {
                    let i = rng.random_range(0..n);
                    out.push(if i < self.priority.len() {
                        &self.priority[i]
                    } else {
                        &self.regular[i - self.priority.len()]
                    });
                }
            }
            SamplingMode::Prioritized => {
                let n_high = (rho * batch as f64).round() as usize;
                let n_high = n_high.min(batch);
                let high = if self.priority.is_empty() { &self.regular } else { &self.priority };
                let low = if self.regular.is_empty() { &self.priority } else { &self.regular };
                for _ in 0..n_high {
                    out.push(&high[rng.random_range(0..high.len())]);
                }
                for _ in n_high..batch {
                    out.push(&low[rng.random_range(0..low.len())]);
                }
            }
        }
        Ok(out)
    }
}
