use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ndgrad::Tensor;
use crate::views::SequenceBatch;

/// One complete trajectory: obs[t], the action taken at obs[t], and the
/// reward it produced.
#[derive(Clone)]
pub struct Episode {
    pub obs: Vec<Tensor>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn ret(&self) -> f64 {
        self.rewards.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.obs.len() != self.actions.len() || self.obs.len() != self.rewards.len() {
            return Err(Error::contract("episode field lengths disagree"));
        }
        if self.rewards.iter().any(|r| !r.is_finite()) {
            return Err(Error::domain("non-finite reward in episode"));
        }
        Ok(())
    }
}

/// Episode store with FIFO eviction by total stored steps.
pub struct ReplayBuffer {
    episodes: VecDeque<Episode>,
    capacity_steps: usize,
    window_len: usize,
    stored_steps: usize,
}

impl ReplayBuffer {
    pub fn new(capacity_steps: usize, window_len: usize) -> Result<Self> {
        if capacity_steps < window_len || window_len == 0 {
            return Err(Error::contract("capacity must hold at least one window"));
        }
        Ok(ReplayBuffer {
            episodes: VecDeque::new(),
            capacity_steps,
            window_len,
            stored_steps: 0,
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn stored_steps(&self) -> usize {
        self.stored_steps
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn push(&mut self, episode: Episode) -> Result<()> {
        episode.validate()?;
        if episode.len() < self.window_len {
            return Err(Error::contract(format!(
                "episode length {} below window {}",
                episode.len(),
                self.window_len
            )));
        }
        self.stored_steps += episode.len();
        self.episodes.push_back(episode);
        while self.stored_steps > self.capacity_steps {
            if let Some(old) = self.episodes.pop_front() {
                self.stored_steps -= old.len();
            } else {
                break;
            }
        }
        Ok(())
    }

    /// N contiguous windows of length `window_len`, uniform over all valid
    /// (episode, offset) pairs.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<SequenceBatch> {
        let t = self.window_len;
        let mut totals = Vec::with_capacity(self.episodes.len());
        let mut total = 0usize;
        for ep in &self.episodes {
            total += ep.len() - t + 1;
            totals.push(total);
        }
        if total == 0 {
            return Err(Error::contract("sampling from an empty buffer"));
        }
        let mut obs = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for _ in 0..n {
            let pick = rng.gen_range(0..total);
            let ep_idx = totals.partition_point(|&c| c <= pick);
            let before = if ep_idx == 0 { 0 } else { totals[ep_idx - 1] };
            let offset = pick - before;
            let ep = &self.episodes[ep_idx];
            obs.push(ep.obs[offset..offset + t].to_vec());
            actions.push(ep.actions[offset..offset + t].to_vec());
            rewards.push(ep.rewards[offset..offset + t].to_vec());
        }
        Ok(SequenceBatch {
            obs,
            actions,
            rewards,
            old_reprs: None,
        })
    }
}
