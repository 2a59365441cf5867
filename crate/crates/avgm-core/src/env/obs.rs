//! Per-agent observations and the global state summary.

use alloc::vec::Vec;

/// One teammate inside the local view window.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleAgent {
    pub id: usize,
    pub rel_row: i32,
    pub rel_col: i32,
    pub hp: f64,
    /// Action the agent took on the previous step, if any.
    pub last_action: Option<usize>,
}

/// A local observation: an environment-specific fixed feature block plus the
/// ordered list of visible teammates (which defines M_i).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub base: Vec<f64>,
    pub visible: Vec<VisibleAgent>,
}

impl Observation {
    pub fn num_visible(&self) -> usize {
        self.visible.len()
    }

    pub fn visible_ids(&self) -> Vec<usize> {
        self.visible.iter().map(|v| v.id).collect()
    }
}

/// Global training-time state (a flattened mini-map for gridworlds).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub data: Vec<f64>,
}

/// Feature vector of one visible agent for attention encoding: the one-hot
/// of an action joined with relative position, hp and id index.
pub fn team_element(
    v: &VisibleAgent,
    action: Option<usize>,
    num_actions: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(num_actions + 4);
    for a in 0..num_actions {
        out.push(if Some(a) == action { 1.0 } else { 0.0 });
    }
    out.push(v.rel_row as f64 / 2.0);
    out.push(v.rel_col as f64 / 2.0);
    out.push(v.hp);
    out.push(v.id as f64 / 8.0);
    out
}

pub fn element_width(num_actions: usize) -> usize {
    num_actions + 4
}

/// Fixed-width network input: base features, the mean of the visible-agent
/// elements (their observed last actions) and the visible count. The width
/// does not depend on the number of agents in the environment.
pub fn net_input(obs: &Observation, num_actions: usize) -> Vec<f64> {
    let ew = element_width(num_actions);
    let mut out = Vec::with_capacity(obs.base.len() + ew + 1);
    out.extend_from_slice(&obs.base);
    let mut pooled = alloc::vec![0.0; ew];
    if !obs.visible.is_empty() {
        for v in &obs.visible {
            let e = team_element(v, v.last_action, num_actions);
            for (p, x) in pooled.iter_mut().zip(e.iter()) {
                *p += x;
            }
        }
        let inv = 1.0 / obs.visible.len() as f64;
        for p in pooled.iter_mut() {
            *p *= inv;
        }
    }
    out.extend_from_slice(&pooled);
    out.push(obs.visible.len() as f64 / 4.0);
    out
}

pub fn net_input_width(base_width: usize, num_actions: usize) -> usize {
    base_width + element_width(num_actions) + 1
}
