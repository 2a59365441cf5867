//! Deterministic, seedable environments.

pub mod grid;
pub mod matrix;
pub mod obs;

use alloc::vec::Vec;

pub use grid::{
    GridScenario, GridWorld, ScenarioKind, ACT_DOWN, ACT_INTERACT, ACT_LEFT, ACT_RIGHT, ACT_STAY,
    ACT_UP, GRID_ACTIONS,
};
pub use matrix::{matrix_game_step, MatrixGame, PayoffTensor};
pub use obs::{element_width, net_input, net_input_width, team_element, GlobalState, Observation, VisibleAgent};

use crate::Result;

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observations: Vec<Observation>,
    pub state: GlobalState,
    pub reward: f64,
    pub done: bool,
    /// Cooperation events fired this step.
    pub coop_events: usize,
    /// Interact actions that missed the k_coop threshold (or had no target).
    pub failed_interacts: usize,
}

/// Common surface of all environments; object safe so the harness can drive
/// any of them.
pub trait Environment {
    fn num_agents(&self) -> usize;
    fn num_actions(&self) -> usize;
    /// Width of the fixed observation block (before visible-agent pooling).
    fn base_width(&self) -> usize;
    fn state_width(&self) -> usize;
    fn episode_limit(&self) -> usize;
    fn reset(&mut self, seed: u64) -> (Vec<Observation>, GlobalState);
    fn step(&mut self, joint: &[usize]) -> Result<StepOutcome>;

    /// Width of the composed network input.
    fn obs_width(&self) -> usize {
        net_input_width(self.base_width(), self.num_actions())
    }

    /// Width of one visible-agent element for the action encoder.
    fn elem_width(&self) -> usize {
        element_width(self.num_actions())
    }
}

/// Environment dimensions needed to build networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvDims {
    pub num_agents: usize,
    pub num_actions: usize,
    pub obs_width: usize,
    pub elem_width: usize,
    pub state_width: usize,
}

impl EnvDims {
    pub fn of(env: &dyn Environment) -> Self {
        EnvDims {
            num_agents: env.num_agents(),
            num_actions: env.num_actions(),
            obs_width: env.obs_width(),
            elem_width: env.elem_width(),
            state_width: env.state_width(),
        }
    }
}
