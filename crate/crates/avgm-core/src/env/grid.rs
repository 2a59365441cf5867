//! Gridworld scenarios: lift, triplelift, pursuit and tiger.
//!
//! All four share one mechanic: movement resolves first, then interaction
//! events (k_coop or more adjacent interactors fire a cooperation event,
//! under-threshold interactors pay the penalty), then prey move and
//! regenerate. Everything is deterministic given the reset seed.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::env::obs::{GlobalState, Observation, VisibleAgent};
use crate::env::{Environment, StepOutcome};
use crate::rng::Rng;
use crate::{CoreError, Result};

pub const ACT_UP: usize = 0;
pub const ACT_DOWN: usize = 1;
pub const ACT_LEFT: usize = 2;
pub const ACT_RIGHT: usize = 3;
pub const ACT_STAY: usize = 4;
pub const ACT_INTERACT: usize = 5;
pub const GRID_ACTIONS: usize = 6;

/// Half-width of the square view window (5x5).
const VIEW_RADIUS: i32 = 2;
const MINIMAP: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Lift,
    TripleLift,
    Pursuit,
    Tiger,
}

impl ScenarioKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "lift" => Ok(ScenarioKind::Lift),
            "triplelift" => Ok(ScenarioKind::TripleLift),
            "pursuit" => Ok(ScenarioKind::Pursuit),
            "tiger" => Ok(ScenarioKind::Tiger),
            other => Err(CoreError::Config(format!(
                "unknown scenario '{other}' (expected lift, triplelift, pursuit or tiger)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Lift => "lift",
            ScenarioKind::TripleLift => "triplelift",
            ScenarioKind::Pursuit => "pursuit",
            ScenarioKind::Tiger => "tiger",
        }
    }

    fn targets_move(&self) -> bool {
        matches!(self, ScenarioKind::Pursuit | ScenarioKind::Tiger)
    }
}

/// Full parameterisation of a gridworld task.
#[derive(Debug, Clone, PartialEq)]
pub struct GridScenario {
    pub kind: ScenarioKind,
    pub map_size: usize,
    pub n_agents: usize,
    pub n_targets: usize,
    /// Cooperation reward R.
    pub coop_reward: f64,
    /// Penalty magnitude P (>= 0); failed interactors contribute -P each.
    pub penalty: f64,
    /// Simultaneous cooperators required for an event.
    pub k_coop: usize,
    pub hp_max: i32,
    pub hp_regen: i32,
    pub episode_limit: usize,
}

impl GridScenario {
    pub fn preset(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Lift => GridScenario {
                kind,
                map_size: 6,
                n_agents: 3,
                n_targets: 3,
                coop_reward: 1.0,
                penalty: 0.3,
                k_coop: 2,
                hp_max: 1,
                hp_regen: 0,
                episode_limit: 100,
            },
            ScenarioKind::TripleLift => GridScenario {
                kind,
                map_size: 6,
                n_agents: 3,
                n_targets: 3,
                coop_reward: 2.0,
                penalty: 0.005,
                k_coop: 3,
                hp_max: 1,
                hp_regen: 0,
                episode_limit: 100,
            },
            ScenarioKind::Pursuit => GridScenario {
                kind,
                map_size: 7,
                n_agents: 4,
                n_targets: 4,
                coop_reward: 1.5,
                penalty: 0.3,
                k_coop: 2,
                hp_max: 1,
                hp_regen: 0,
                episode_limit: 100,
            },
            // Two attackers match the regeneration and farm the prey forever;
            // three or more eventually kill it.
            ScenarioKind::Tiger => GridScenario {
                kind,
                map_size: 7,
                n_agents: 4,
                n_targets: 4,
                coop_reward: 1.5,
                penalty: 0.3,
                k_coop: 2,
                hp_max: 6,
                hp_regen: 2,
                episode_limit: 100,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.map_size * self.map_size < self.n_agents + self.n_targets {
            return Err(CoreError::Config(format!(
                "{}x{} map cannot hold {} agents and {} targets",
                self.map_size, self.map_size, self.n_agents, self.n_targets
            )));
        }
        if self.n_agents == 0 || self.n_targets == 0 {
            return Err(CoreError::Config("need at least one agent and one target".into()));
        }
        if self.k_coop == 0 {
            return Err(CoreError::Config("k_coop must be >= 1".into()));
        }
        if self.penalty < 0.0 {
            return Err(CoreError::Config("penalty magnitude must be >= 0".into()));
        }
        if self.episode_limit == 0 || self.episode_limit > 100 {
            return Err(CoreError::Config("episode limit must be in 1..=100".into()));
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        format!(
            "{} {}x{} agents={} targets={} R={} P={} k={}",
            self.kind.name(),
            self.map_size,
            self.map_size,
            self.n_agents,
            self.n_targets,
            self.coop_reward,
            self.penalty,
            self.k_coop
        )
    }
}

#[derive(Debug, Clone)]
struct AgentState {
    row: i32,
    col: i32,
    last_action: Option<usize>,
}

#[derive(Debug, Clone)]
struct TargetState {
    row: i32,
    col: i32,
    hp: i32,
    alive: bool,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    scenario: GridScenario,
    agents: Vec<AgentState>,
    targets: Vec<TargetState>,
    step_count: usize,
    done: bool,
    rng: Rng,
}

impl GridWorld {
    pub fn new(scenario: GridScenario) -> Result<Self> {
        scenario.validate()?;
        Ok(GridWorld {
            scenario,
            agents: Vec::new(),
            targets: Vec::new(),
            step_count: 0,
            done: true,
            rng: Rng::new(0),
        })
    }

    pub fn scenario(&self) -> &GridScenario {
        &self.scenario
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    fn in_bounds(&self, row: i32, col: i32) -> bool {
        let s = self.scenario.map_size as i32;
        (0..s).contains(&row) && (0..s).contains(&col)
    }

    fn occupied(&self, row: i32, col: i32) -> bool {
        self.agents.iter().any(|a| a.row == row && a.col == col)
            || self
                .targets
                .iter()
                .any(|t| t.alive && t.row == row && t.col == col)
    }

    /// Places an entity directly; test/report hook for constructing probe
    /// states. Panics if the cell is occupied.
    pub fn place_agent(&mut self, idx: usize, row: i32, col: i32) {
        assert!(self.in_bounds(row, col) && !self.occupied(row, col));
        self.agents[idx].row = row;
        self.agents[idx].col = col;
    }

    pub fn place_target(&mut self, idx: usize, row: i32, col: i32) {
        assert!(self.in_bounds(row, col) && !self.occupied(row, col));
        self.targets[idx].row = row;
        self.targets[idx].col = col;
    }

    pub fn agent_position(&self, idx: usize) -> (i32, i32) {
        (self.agents[idx].row, self.agents[idx].col)
    }

    pub fn target_position(&self, idx: usize) -> (i32, i32) {
        (self.targets[idx].row, self.targets[idx].col)
    }

    pub fn target_alive(&self, idx: usize) -> bool {
        self.targets[idx].alive
    }

    pub fn target_hp(&self, idx: usize) -> i32 {
        self.targets[idx].hp
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.agents.len()).map(|i| self.observe(i)).collect()
    }

    fn observe(&self, idx: usize) -> Observation {
        let me = &self.agents[idx];
        let size = self.scenario.map_size;
        // 5x5 window, channel-major: other agents, targets, out-of-bounds.
        let mut window = vec![0.0; 3 * 25];
        for dr in -VIEW_RADIUS..=VIEW_RADIUS {
            for dc in -VIEW_RADIUS..=VIEW_RADIUS {
                let cell = ((dr + VIEW_RADIUS) * 5 + (dc + VIEW_RADIUS)) as usize;
                let (r, c) = (me.row + dr, me.col + dc);
                if !self.in_bounds(r, c) {
                    window[50 + cell] = 1.0;
                    continue;
                }
                for (j, a) in self.agents.iter().enumerate() {
                    if j != idx && a.row == r && a.col == c {
                        window[cell] = 1.0;
                    }
                }
                for t in &self.targets {
                    if t.alive && t.row == r && t.col == c {
                        window[25 + cell] = t.hp as f64 / self.scenario.hp_max as f64;
                    }
                }
            }
        }
        let denom = (size - 1).max(1) as f64;
        let mut base = window;
        base.push(me.row as f64 / denom);
        base.push(me.col as f64 / denom);
        for a in 0..GRID_ACTIONS {
            base.push(if me.last_action == Some(a) { 1.0 } else { 0.0 });
        }
        let mut visible = Vec::new();
        for (j, other) in self.agents.iter().enumerate() {
            if j == idx {
                continue;
            }
            let dr = other.row - me.row;
            let dc = other.col - me.col;
            if dr.abs() <= VIEW_RADIUS && dc.abs() <= VIEW_RADIUS {
                visible.push(VisibleAgent {
                    id: j,
                    rel_row: dr,
                    rel_col: dc,
                    hp: 1.0,
                    last_action: other.last_action,
                });
            }
        }
        Observation { base, visible }
    }

    fn global_state(&self) -> GlobalState {
        let mut data = vec![0.0; 2 * MINIMAP * MINIMAP];
        let size = self.scenario.map_size;
        let bucket = |x: i32| -> usize { (x as usize * MINIMAP) / size };
        let an = self.agents.len() as f64;
        for a in &self.agents {
            data[bucket(a.row) * MINIMAP + bucket(a.col)] += 1.0 / an;
        }
        let tn = self.targets.len() as f64;
        for t in &self.targets {
            if t.alive {
                let frac = t.hp as f64 / self.scenario.hp_max as f64;
                data[MINIMAP * MINIMAP + bucket(t.row) * MINIMAP + bucket(t.col)] += frac / tn;
            }
        }
        GlobalState { data }
    }

    /// Escape move for one prey: with probability 0.8 the free neighbouring
    /// cell maximising squared distance to the nearest agent (uniform among
    /// ties), otherwise a uniform free neighbouring cell. Boxed-in prey stay.
    fn prey_move(&mut self, t_idx: usize) {
        let (row, col) = (self.targets[t_idx].row, self.targets[t_idx].col);
        let mut free: Vec<(i32, i32)> = Vec::new();
        for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let (r, c) = (row + dr, col + dc);
            if self.in_bounds(r, c) && !self.occupied(r, c) {
                free.push((r, c));
            }
        }
        if free.is_empty() {
            return;
        }
        let dest = if self.rng.chance(0.8) {
            let dist = |r: i32, c: i32| -> i64 {
                self.agents
                    .iter()
                    .map(|a| {
                        let dr = (a.row - r) as i64;
                        let dc = (a.col - c) as i64;
                        dr * dr + dc * dc
                    })
                    .min()
                    .unwrap_or(0)
            };
            let best = free.iter().map(|&(r, c)| dist(r, c)).max().unwrap();
            let maximizers: Vec<(i32, i32)> =
                free.iter().copied().filter(|&(r, c)| dist(r, c) == best).collect();
            *self.rng.pick(&maximizers)
        } else {
            *self.rng.pick(&free)
        };
        self.targets[t_idx].row = dest.0;
        self.targets[t_idx].col = dest.1;
    }
}

impl Environment for GridWorld {
    fn num_agents(&self) -> usize {
        self.scenario.n_agents
    }

    fn num_actions(&self) -> usize {
        GRID_ACTIONS
    }

    fn base_width(&self) -> usize {
        3 * 25 + 2 + GRID_ACTIONS
    }

    fn state_width(&self) -> usize {
        2 * MINIMAP * MINIMAP
    }

    fn episode_limit(&self) -> usize {
        self.scenario.episode_limit
    }

    fn reset(&mut self, seed: u64) -> (Vec<Observation>, GlobalState) {
        self.rng = Rng::new(seed);
        let size = self.scenario.map_size;
        let cells = self
            .rng
            .sample_distinct(size * size, self.scenario.n_agents + self.scenario.n_targets);
        self.agents = cells[..self.scenario.n_agents]
            .iter()
            .map(|&c| AgentState {
                row: (c / size) as i32,
                col: (c % size) as i32,
                last_action: Some(ACT_STAY),
            })
            .collect();
        self.targets = cells[self.scenario.n_agents..]
            .iter()
            .map(|&c| TargetState {
                row: (c / size) as i32,
                col: (c % size) as i32,
                hp: self.scenario.hp_max,
                alive: true,
            })
            .collect();
        self.step_count = 0;
        self.done = false;
        (self.observations(), self.global_state())
    }

    fn step(&mut self, joint: &[usize]) -> Result<StepOutcome> {
        if self.done {
            return Err(CoreError::Usage("step on a finished episode".into()));
        }
        if joint.len() != self.agents.len() {
            return Err(CoreError::Usage(format!(
                "{} actions for {} agents",
                joint.len(),
                self.agents.len()
            )));
        }
        // Movement: occupancy is decided before anyone moves; conflicting
        // proposals go to the lowest agent index.
        let mut claimed: Vec<(i32, i32)> = Vec::new();
        let mut moves: Vec<Option<(i32, i32)>> = vec![None; joint.len()];
        for (i, &action) in joint.iter().enumerate() {
            let (dr, dc) = match action {
                ACT_UP => (-1, 0),
                ACT_DOWN => (1, 0),
                ACT_LEFT => (0, -1),
                ACT_RIGHT => (0, 1),
                ACT_STAY | ACT_INTERACT => (0, 0),
                other => {
                    return Err(CoreError::Usage(format!("invalid action index {other}")));
                }
            };
            if (dr, dc) == (0, 0) {
                continue;
            }
            let (r, c) = (self.agents[i].row + dr, self.agents[i].col + dc);
            if self.in_bounds(r, c) && !self.occupied(r, c) && !claimed.contains(&(r, c)) {
                claimed.push((r, c));
                moves[i] = Some((r, c));
            }
        }
        for (i, mv) in moves.iter().enumerate() {
            if let Some((r, c)) = mv {
                self.agents[i].row = *r;
                self.agents[i].col = *c;
            }
        }
        // Interactions: each interactor targets the adjacent alive target
        // with the lowest (row, col); an event fires when k_coop or more
        // agents target the same one.
        let mut target_of: Vec<Option<usize>> = vec![None; joint.len()];
        let mut counts: Vec<usize> = vec![0; self.targets.len()];
        for (i, &action) in joint.iter().enumerate() {
            if action != ACT_INTERACT {
                continue;
            }
            let me = &self.agents[i];
            let mut best: Option<usize> = None;
            for (ti, t) in self.targets.iter().enumerate() {
                if !t.alive {
                    continue;
                }
                let adjacent = (t.row - me.row).abs() + (t.col - me.col).abs() == 1;
                if adjacent {
                    let better = match best {
                        None => true,
                        Some(b) => {
                            let bt = &self.targets[b];
                            (t.row, t.col) < (bt.row, bt.col)
                        }
                    };
                    if better {
                        best = Some(ti);
                    }
                }
            }
            target_of[i] = best;
            if let Some(ti) = best {
                counts[ti] += 1;
            }
        }
        let mut reward = 0.0;
        let mut coop_events = 0;
        let mut failed_interacts = 0;
        for (ti, &count) in counts.iter().enumerate() {
            if count < self.scenario.k_coop || !self.targets[ti].alive {
                continue;
            }
            coop_events += 1;
            reward += self.scenario.coop_reward;
            match self.scenario.kind {
                ScenarioKind::Lift | ScenarioKind::TripleLift | ScenarioKind::Pursuit => {
                    self.targets[ti].alive = false;
                }
                ScenarioKind::Tiger => {
                    self.targets[ti].hp -= count as i32;
                    if self.targets[ti].hp <= 0 {
                        self.targets[ti].alive = false;
                    }
                }
            }
        }
        for (i, &action) in joint.iter().enumerate() {
            if action != ACT_INTERACT {
                continue;
            }
            let succeeded = matches!(target_of[i], Some(ti) if counts[ti] >= self.scenario.k_coop);
            if !succeeded {
                failed_interacts += 1;
                reward -= self.scenario.penalty;
            }
        }
        // Prey escape and regeneration at step end.
        if self.scenario.kind.targets_move() {
            for ti in 0..self.targets.len() {
                if self.targets[ti].alive {
                    self.prey_move(ti);
                }
            }
        }
        if self.scenario.hp_regen > 0 {
            for t in self.targets.iter_mut() {
                if t.alive {
                    t.hp = (t.hp + self.scenario.hp_regen).min(self.scenario.hp_max);
                }
            }
        }
        for (a, &action) in self.agents.iter_mut().zip(joint.iter()) {
            a.last_action = Some(action);
        }
        self.step_count += 1;
        let all_cleared = self.targets.iter().all(|t| !t.alive);
        self.done = all_cleared || self.step_count >= self.scenario.episode_limit;
        Ok(StepOutcome {
            observations: self.observations(),
            state: self.global_state(),
            reward,
            done: self.done,
            coop_events,
            failed_interacts,
        })
    }
}
