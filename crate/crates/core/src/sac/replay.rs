//! Fixed-capacity ring buffer of transitions.

use ndarray::{Array1, Array2};
use rand::Rng;

use super::SacError;

#[derive(Debug, Clone)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Storage is flat row-major; once full, the oldest row is overwritten.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_obs: Vec<f64>,
    dones: Vec<f64>,
    cursor: usize,
    len: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        Self {
            capacity,
            obs_dim,
            act_dim,
            obs: vec![0.0; capacity * obs_dim],
            actions: vec![0.0; capacity * act_dim],
            rewards: vec![0.0; capacity],
            next_obs: vec![0.0; capacity * obs_dim],
            dones: vec![0.0; capacity],
            cursor: 0,
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Slot the next push will write to.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], reward: f64, next_obs: &[f64], done: bool) -> Result<(), SacError> {
        if obs.len() != self.obs_dim || next_obs.len() != self.obs_dim || action.len() != self.act_dim {
            return Err(SacError::ShapeMismatch("transition does not match buffer dimensions".into()));
        }
        let i = self.cursor;
        self.obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(obs);
        self.next_obs[i * self.obs_dim..(i + 1) * self.obs_dim].copy_from_slice(next_obs);
        self.actions[i * self.act_dim..(i + 1) * self.act_dim].copy_from_slice(action);
        self.rewards[i] = reward;
        self.dones[i] = if done { 1.0 } else { 0.0 };
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Reward stored in slot `i`.
    pub fn reward_at(&self, i: usize) -> Option<f64> {
        (i < self.len).then(|| self.rewards[i])
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch, SacError> {
        if batch_size == 0 || self.len < batch_size {
            return Err(SacError::BufferTooSmall { size: self.len, needed: batch_size.max(1) });
        }
        let (od, ad) = (self.obs_dim, self.act_dim);
        let mut obs = Array2::zeros((batch_size, od));
        let mut next_obs = Array2::zeros((batch_size, od));
        let mut actions = Array2::zeros((batch_size, ad));
        let mut rewards = Array1::zeros(batch_size);
        let mut dones = Array1::zeros(batch_size);
        for r in 0..batch_size {
            let i = rng.random_range(0..self.len);
            for c in 0..od {
                obs[[r, c]] = self.obs[i * od + c];
                next_obs[[r, c]] = self.next_obs[i * od + c];
            }
            for c in 0..ad {
                actions[[r, c]] = self.actions[i * ad + c];
            }
            rewards[r] = self.rewards[i];
            dones[r] = self.dones[i];
        }
        Ok(Batch { obs, actions, rewards, next_obs, dones })
    }
}
