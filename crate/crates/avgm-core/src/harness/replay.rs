//! Episode storage, replay sampling and batched row layout.


use alloc::vec::Vec;

use crate::env::Observation;
use crate::rng::Rng;

/// One complete episode. Observations and global states carry the extra
/// post-terminal entry so targets can be bootstrapped; recurrent training
/// replays the whole sequence from a zero hidden state.
#[derive(Debug, Clone)]
pub struct Episode {
    pub len: usize,
    /// len + 1 entries of per-agent observations.
    pub obs: Vec<Vec<Observation>>,
    /// len + 1 flattened global states.
    pub states: Vec<Vec<f64>>,
    /// len joint actions.
    pub actions: Vec<Vec<usize>>,
    /// len global rewards.
    pub rewards: Vec<f64>,
    /// len cooperation-event counts (used to filter the acting-alone
    /// value's regression onto non-cooperative steps).
    pub events: Vec<usize>,
    /// len x n_agents alive masks (alive agents contribute to every loss).
    pub alive: Vec<Vec<bool>>,
}

impl Episode {
    pub fn n_agents(&self) -> usize {
        self.obs[0].len()
    }

    pub fn total_reward(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// A sampled batch, sorted by episode length (longest first) so that the
/// set of episodes active at time t is always a prefix.
#[derive(Debug, Clone)]
pub struct EpisodeBatch {
    pub episodes: Vec<Episode>,
    pub n_agents: usize,
    pub num_actions: usize,
}

impl EpisodeBatch {
    pub fn new(mut episodes: Vec<Episode>, num_actions: usize) -> Self {
        episodes.sort_by(|a, b| b.len.cmp(&a.len));
        let n_agents = episodes[0].n_agents();
        EpisodeBatch {
            episodes,
            n_agents,
            num_actions,
        }
    }

    pub fn lens(&self) -> Vec<usize> {
        self.episodes.iter().map(|e| e.len).collect()
    }

    pub fn t_max(&self) -> usize {
        self.episodes.first().map(|e| e.len).unwrap_or(0)
    }
}

/// Prefix-row layout of a batch unrolled over time: at time t only the
/// first `counts[t]` episodes contribute rows, one per agent.
#[derive(Debug, Clone)]
pub struct TrunkLayout {
    pub counts: Vec<usize>,
    pub offsets: Vec<usize>,
    pub n_agents: usize,
    pub total_rows: usize,
}

impl TrunkLayout {
    /// `lens` must be sorted descending.
    pub fn new(lens: &[usize], n_agents: usize) -> Self {
        let t_max = lens.first().copied().unwrap_or(0);
        let mut counts = Vec::with_capacity(t_max);
        let mut offsets = Vec::with_capacity(t_max);
        let mut total = 0;
        for t in 0..t_max {
            let c = lens.iter().take_while(|&&l| l > t).count();
            offsets.push(total);
            counts.push(c);
            total += c * n_agents;
        }
        TrunkLayout {
            counts,
            offsets,
            n_agents,
            total_rows: total,
        }
    }

    pub fn t_max(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn row(&self, t: usize, pos: usize, agent: usize) -> usize {
        debug_assert!(pos < self.counts[t]);
        self.offsets[t] + pos * self.n_agents + agent
    }

    /// Step index (rows collapsed over agents).
    #[inline]
    pub fn step(&self, t: usize, pos: usize) -> usize {
        (self.offsets[t] + pos * self.n_agents) / self.n_agents
    }

    pub fn total_steps(&self) -> usize {
        self.total_rows / self.n_agents
    }
}

/// Ring buffer of whole episodes.
#[derive(Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Episode>,
    cursor: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        ReplayBuffer {
            capacity,
            items: Vec::new(),
            cursor: 0,
            inserted: 0,
        }
    }

    pub fn push(&mut self, ep: Episode) {
        if self.items.len() < self.capacity {
            self.items.push(ep);
        } else {
            self.items[self.cursor] = ep;
            self.cursor = (self.cursor + 1) % self.capacity;
        }
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Uniform sample of `n` distinct stored episodes.
    pub fn sample(&self, n: usize, num_actions: usize, rng: &mut Rng) -> EpisodeBatch {
        assert!(n <= self.items.len());
        let idx = rng.sample_distinct(self.items.len(), n);
        let eps: Vec<Episode> = idx.into_iter().map(|i| self.items[i].clone()).collect();
        EpisodeBatch::new(eps, num_actions)
    }
}
