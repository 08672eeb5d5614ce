use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Real, Rng};

/// One stored `(s, a, r, s′)` with the environment step that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition<T> {
    pub obs: Vec<T>,
    pub action: Vec<T>,
    pub reward: T,
    pub next_obs: Vec<T>,
    pub step: u64,
}

/// A sampled mini-batch, one transition per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub obs: Array2<T>,
    pub action: Array2<T>,
    pub reward: Array1<T>,
    pub next_obs: Array2<T>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }

    pub fn from_transitions(items: &[&Transition<T>]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::shape("Batch", "empty batch"))?;
        let (n, d_obs, d_act) = (items.len(), first.obs.len(), first.action.len());
        let mut obs = Array2::zeros((n, d_obs));
        let mut action = Array2::zeros((n, d_act));
        let mut next_obs = Array2::zeros((n, d_obs));
        let mut reward = Array1::zeros(n);
        for (i, t) in items.iter().enumerate() {
            if t.obs.len() != d_obs || t.next_obs.len() != d_obs || t.action.len() != d_act {
                return Err(Error::shape("Batch", format!("transition {i} has inconsistent widths")));
            }
            obs.row_mut(i).assign(&ndarray::ArrayView1::from(&t.obs[..]));
            action.row_mut(i).assign(&ndarray::ArrayView1::from(&t.action[..]));
            next_obs.row_mut(i).assign(&ndarray::ArrayView1::from(&t.next_obs[..]));
            reward[i] = t.reward;
        }
        Ok(Self {
            obs,
            action,
            reward,
            next_obs,
        })
    }
}

/// Fixed-capacity ring; the oldest transition is overwritten when full.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer<T> {
    items: Vec<Transition<T>>,
    capacity: usize,
    inserted: u64,
}

impl<T: Real> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("buffer capacity must be >= 1".into()));
        }
        Ok(Self {
            items: Vec::with_capacity(capacity.min(1 << 16)),
            capacity,
            inserted: 0,
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

    /// Transitions pushed since creation, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition<T>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.items[slot] = t;
        }
        self.inserted += 1;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition<T>> {
        self.items.iter()
    }

    /// `n` distinct transitions drawn uniformly; `None` if fewer are stored.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Option<Batch<T>> {
        if n == 0 || self.items.len() < n {
            return None;
        }
        let picks: Vec<_> = rng
            .distinct_indices(self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect();
        Batch::from_transitions(&picks).ok()
    }
}
