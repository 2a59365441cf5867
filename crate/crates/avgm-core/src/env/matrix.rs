//! One-step N-agent matrix games.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::obs::{GlobalState, Observation, VisibleAgent};
use crate::env::{Environment, StepOutcome};
use crate::{CoreError, Result};

/// Exact joint-action reward tensor: `|A|^N` entries, row-major with agent 0
/// as the slowest index.
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTensor {
    num_agents: usize,
    num_actions: usize,
    rewards: Vec<f64>,
}

impl PayoffTensor {
    pub fn new(num_agents: usize, num_actions: usize, rewards: Vec<f64>) -> Result<Self> {
        let want = num_actions.pow(num_agents as u32);
        if rewards.len() != want {
            return Err(CoreError::Config(format!(
                "payoff tensor needs {want} entries, got {}",
                rewards.len()
            )));
        }
        if !rewards.iter().all(|r| r.is_finite()) {
            return Err(CoreError::Config("payoff tensor has non-finite entries".into()));
        }
        Ok(PayoffTensor {
            num_agents,
            num_actions,
            rewards,
        })
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn joint_index(&self, joint: &[usize]) -> Result<usize> {
        if joint.len() != self.num_agents {
            return Err(CoreError::Usage(format!(
                "joint action has {} entries for {} agents",
                joint.len(),
                self.num_agents
            )));
        }
        let mut idx = 0;
        for &a in joint {
            if a >= self.num_actions {
                return Err(CoreError::Usage(format!(
                    "action index {a} out of range (|A| = {})",
                    self.num_actions
                )));
            }
            idx = idx * self.num_actions + a;
        }
        Ok(idx)
    }

    /// Reward of one joint action.
    pub fn reward(&self, joint: &[usize]) -> Result<f64> {
        Ok(self.rewards[self.joint_index(joint)?])
    }

    /// The bimanual-lifting payoff over actions {C, L}: both cooperate -> +R,
    /// exactly one cooperates -> -P, both lazy -> 0.
    pub fn lifting(r: f64, p: f64) -> Self {
        PayoffTensor::new(2, 2, vec![r, -p, -p, 0.0]).expect("static shape")
    }

    /// Two agents, actions {C, L1, L2}: (C, C) -> +R, exactly one C -> -P,
    /// anything else 0.
    pub fn three_action(r: f64, p: f64) -> Self {
        let mut rewards = vec![0.0; 9];
        for a0 in 0..3 {
            for a1 in 0..3 {
                let c = (a0 == 0) as usize + (a1 == 0) as usize;
                rewards[a0 * 3 + a1] = match c {
                    2 => r,
                    1 => -p,
                    _ => 0.0,
                };
            }
        }
        PayoffTensor::new(2, 3, rewards).expect("static shape")
    }
}

/// Returns the payoff entry for a joint action. The episode around it is a
/// single step; see [`MatrixGame`].
pub fn matrix_game_step(payoff: &PayoffTensor, joint: &[usize]) -> Result<f64> {
    payoff.reward(joint)
}

/// A one-step episodic wrapper: constant observations, all agents mutually
/// visible, constant global state.
#[derive(Debug, Clone)]
pub struct MatrixGame {
    payoff: PayoffTensor,
    done: bool,
}

impl MatrixGame {
    pub fn new(payoff: PayoffTensor) -> Self {
        MatrixGame {
            payoff,
            done: true,
        }
    }

    pub fn payoff(&self) -> &PayoffTensor {
        &self.payoff
    }

    fn observations(&self) -> Vec<Observation> {
        let n = self.payoff.num_agents;
        (0..n)
            .map(|i| Observation {
                base: vec![1.0],
                visible: (0..n)
                    .filter(|&j| j != i)
                    .map(|j| VisibleAgent {
                        id: j,
                        rel_row: 0,
                        rel_col: 0,
                        hp: 1.0,
                        last_action: None,
                    })
                    .collect(),
            })
            .collect()
    }
}

impl Environment for MatrixGame {
    fn num_agents(&self) -> usize {
        self.payoff.num_agents
    }

    fn num_actions(&self) -> usize {
        self.payoff.num_actions
    }

    fn base_width(&self) -> usize {
        1
    }

    fn state_width(&self) -> usize {
        1
    }

    fn episode_limit(&self) -> usize {
        1
    }

    fn reset(&mut self, _seed: u64) -> (Vec<Observation>, GlobalState) {
        self.done = false;
        (self.observations(), GlobalState { data: vec![1.0] })
    }

    fn step(&mut self, joint: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(CoreError::Usage("step on a finished episode".into()));
        }
        let reward = self.payoff.reward(joint)?;
        self.done = true;
        Ok(StepOutcome {
            observations: self.observations(),
            state: GlobalState { data: vec![1.0] },
            reward,
            done: true,
            coop_events: usize::from(reward > 0.0),
            failed_interacts: 0,
        })
    }
}
