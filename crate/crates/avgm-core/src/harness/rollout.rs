//! Episode collection.

use alloc::vec::Vec;

use crate::env::{net_input, Environment};
use crate::harness::replay::Episode;
use crate::harness::Learner;
use crate::rng::Rng;
use crate::Result;

/// Summary of one episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub len: usize,
    pub total_reward: f64,
    pub coop_events: usize,
    pub failed_interacts: usize,
}

/// One CSV-exportable step record.
#[derive(Debug, Clone)]
pub struct TraceStep {
    pub step: usize,
    pub actions: Vec<usize>,
    pub reward: f64,
    pub coop_events: usize,
    pub failed_interacts: usize,
}

/// Runs one epsilon-greedy episode. Recurrent state starts at zero and is
/// advanced per agent with the policy trunk; stored histories are the raw
/// observation/action sequences, so training can replay from step zero.
pub fn rollout(
    learner: &dyn Learner,
    env: &mut dyn Environment,
    env_seed: u64,
    eps: f64,
    explore_rng: &mut Rng,
    trace: Option<&mut Vec<TraceStep>>,
) -> Result<(Episode, EpisodeStats)> {
    let n = env.num_agents();
    let na = env.num_actions();
    let (mut obs, mut state) = env.reset(env_seed);
    let mut hiddens: Vec<crate::tensor::TensorBuf> = (0..n)
        .map(|_| crate::tensor::TensorBuf::zeros(&[1, learner.hidden_width()]))
        .collect();
    let mut episode = Episode {
        len: 0,
        obs: Vec::new(),
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        events: Vec::new(),
        alive: Vec::new(),
    };
    let mut stats = EpisodeStats {
        len: 0,
        total_reward: 0.0,
        coop_events: 0,
        failed_interacts: 0,
    };
    let mut trace = trace;
    loop {
        episode.obs.push(obs.clone());
        episode.states.push(state.data.clone());
        let mut joint = Vec::with_capacity(n);
        for (agent, h) in hiddens.iter_mut().enumerate() {
            let x = net_input(&obs[agent], na);
            let (action, new_h) = learner.act(h, &x, eps, explore_rng);
            *h = new_h;
            joint.push(action);
        }
        let out = env.step(&joint)?;
        if let Some(t) = trace.as_deref_mut() {
            t.push(TraceStep {
                step: episode.len,
                actions: joint.clone(),
                reward: out.reward,
                coop_events: out.coop_events,
                failed_interacts: out.failed_interacts,
            });
        }
        episode.actions.push(joint);
        episode.rewards.push(out.reward);
        episode.events.push(out.coop_events);
        episode.alive.push(alloc::vec![true; n]);
        episode.len += 1;
        stats.len += 1;
        stats.total_reward += out.reward;
        stats.coop_events += out.coop_events;
        stats.failed_interacts += out.failed_interacts;
        obs = out.observations;
        state = out.state;
        if out.done {
            break;
        }
    }
    episode.obs.push(obs);
    episode.states.push(state.data);
    Ok((episode, stats))
}
