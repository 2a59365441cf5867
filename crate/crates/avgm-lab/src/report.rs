//! Interpretability reports over trained checkpoints: per-action marginal
//! contributions under fixed categories, the category map over joint
//! actions, and the cross-agent variance of the optimistic utility
//! across a run's checkpoints.

use std::path::Path;

use avgm_core::avgm::{AvgmLearner, TeamContext};
use avgm_core::encoder::LatentCategory;
use avgm_core::env::{
    net_input, EnvDims, Environment, GridWorld, Observation, ACT_INTERACT, ACT_STAY,
    GRID_ACTIONS,
};
use avgm_core::harness::Learner;
use avgm_core::math;

use crate::build;
use crate::checkpoint::{restore_section, Checkpoint};
use crate::config::{RunConfig, ScenarioConfig};
use crate::error::{LabError, Result};
use crate::rundir::{fmt_f64, CsvDoc};

/// Rebuilds the AVGM learner from a checkpoint (reports need the concrete
/// critic surface, not the trait object).
pub fn restore_avgm(ckpt: &Checkpoint) -> Result<AvgmLearner> {
    if ckpt.config.method != "avgm" {
        return Err(LabError::usage(format!(
            "reports need an avgm checkpoint, got method '{}'",
            ckpt.config.method
        )));
    }
    let env = build::build_env(&ckpt.config)?;
    let dims = EnvDims::of(env.as_ref());
    let mut learner = build::build_avgm(&ckpt.config, dims)?;
    restore_section(ckpt, "params", learner.params_mut())?;
    restore_section(ckpt, "targets", learner.targets_mut())?;
    Ok(learner)
}

/// The interpretability probe state: every agent adjacent to one cargo,
/// ready to lift, with any remaining entities parked away from it.
pub fn probe_state(cfg: &RunConfig) -> Result<(GridWorld, Vec<Observation>)> {
    let ScenarioConfig::Grid(sc) = &cfg.scenario else {
        return Err(LabError::usage(
            "the probe state is defined for gridworld scenarios",
        ));
    };
    let mut world = GridWorld::new(sc.clone())?;
    world.reset(0);
    let size = sc.map_size as i32;
    let centre = (size / 2, size / 2);
    let around = [
        (centre.0 - 1, centre.1),
        (centre.0, centre.1 - 1),
        (centre.0, centre.1 + 1),
        (centre.0 + 1, centre.1),
    ];
    if sc.n_agents > around.len() {
        return Err(LabError::usage(format!(
            "probe state not constructible: {} agents cannot all be adjacent to one target",
            sc.n_agents
        )));
    }
    // Park everything on the outer ring, then place the probe arrangement.
    let mut park: Vec<(i32, i32)> = Vec::new();
    for r in 0..size {
        for c in 0..size {
            let cell = (r, c);
            let is_probe = cell == centre || around.contains(&cell);
            if !is_probe {
                park.push(cell);
            }
        }
    }
    if park.len() < sc.n_agents + sc.n_targets {
        return Err(LabError::usage("probe state not constructible: map too small"));
    }
    let mut k = park.len();
    let occupied = |w: &GridWorld, cell: (i32, i32)| -> bool {
        (0..w.scenario().n_agents).any(|i| w.agent_position(i) == cell)
            || (0..w.scenario().n_targets)
                .any(|i| w.target_alive(i) && w.target_position(i) == cell)
    };
    let mut next_free = |w: &GridWorld| -> (i32, i32) {
        loop {
            k -= 1;
            if !occupied(w, park[k]) {
                return park[k];
            }
        }
    };
    for i in 0..sc.n_agents {
        let cell = next_free(&world);
        world.place_agent(i, cell.0, cell.1);
    }
    for i in 0..sc.n_targets {
        let cell = next_free(&world);
        world.place_target(i, cell.0, cell.1);
    }
    world.place_target(0, centre.0, centre.1);
    for i in 0..sc.n_agents {
        world.place_agent(i, around[i].0, around[i].1);
    }
    let obs = world.observations();
    Ok((world, obs))
}

/// Per-action marginal contributions under the "others lift" and "others
/// lazy" categories, one block per probe agent.
pub fn marginal_report(cfg: &RunConfig, learner: &AvgmLearner) -> Result<CsvDoc> {
    let (_, observations) = probe_state(cfg)?;
    let mut doc = CsvDoc::new(cfg, "agent,context,action,phi");
    for (agent, obs) in observations.iter().enumerate() {
        let x = net_input(obs, GRID_ACTIONS);
        let h = learner.advance_history(&learner.initial_history(), &x);
        let lazy = learner.lazy_action(&h);
        for (ctx_name, action) in [("others_lift", ACT_INTERACT), ("others_lazy", ACT_STAY)] {
            let team = TeamContext {
                visible: obs.visible.clone(),
                actions: vec![action; obs.visible.len()],
            };
            let z = learner.encode_context(&x, &team);
            let z_hard = LatentCategory {
                probs: z.one_hot(),
                hard_index: z.hard_index,
            };
            let q = learner.coll_values(&h, &z_hard);
            for (a, &v) in q.iter().enumerate() {
                doc.row(&[
                    agent.to_string(),
                    ctx_name.to_string(),
                    a.to_string(),
                    fmt_f64(v - q[lazy]),
                ]);
            }
        }
    }
    Ok(doc)
}

/// Category map: hard index over the joint-action combinations of the first
/// (up to two) visible agents of probe agent 0.
pub fn categories_report(cfg: &RunConfig, learner: &AvgmLearner) -> Result<CsvDoc> {
    let (_, observations) = probe_state(cfg)?;
    let obs = &observations[0];
    if obs.visible.is_empty() {
        return Err(LabError::usage(
            "probe agent sees no teammates; category map needs at least one",
        ));
    }
    let x = net_input(obs, GRID_ACTIONS);
    let pair = obs.visible.len() >= 2;
    let mut doc = CsvDoc::new(cfg, "action_first,action_second,hard_index");
    for a1 in 0..GRID_ACTIONS {
        let seconds: Vec<Option<usize>> = if pair {
            (0..GRID_ACTIONS).map(Some).collect()
        } else {
            vec![None]
        };
        for a2 in seconds {
            let mut visible = vec![obs.visible[0].clone()];
            let mut actions = vec![a1];
            if let Some(a2) = a2 {
                visible.push(obs.visible[1].clone());
                actions.push(a2);
            }
            let z = learner.encode_context(&x, &TeamContext { visible, actions });
            doc.row(&[
                a1.to_string(),
                a2.map(|a| a.to_string()).unwrap_or_else(|| "-".into()),
                z.hard_index.to_string(),
            ]);
        }
    }
    Ok(doc)
}

/// Cross-agent variance of max_{z,a} Q_coll at the probe state, one row per
/// checkpoint of a finished run.
pub fn variance_report(cfg: &RunConfig, checkpoints: &[(u64, AvgmLearner)]) -> Result<CsvDoc> {
    let (_, observations) = probe_state(cfg)?;
    let mut doc = CsvDoc::new(cfg, "env_steps,variance,mean_peak");
    for (steps, learner) in checkpoints {
        let mut peaks = Vec::with_capacity(observations.len());
        for obs in observations.iter() {
            let x = net_input(obs, GRID_ACTIONS);
            let h = learner.advance_history(&learner.initial_history(), &x);
            let mut best = f64::NEG_INFINITY;
            for cat in 0..learner.net_config().z_categories {
                let mut probs = vec![0.0; learner.net_config().z_categories];
                probs[cat] = 1.0;
                let q = learner.coll_values(
                    &h,
                    &LatentCategory {
                        probs,
                        hard_index: cat,
                    },
                );
                best = best.max(q[math::argmax(&q)]);
            }
            peaks.push(best);
        }
        let mean = peaks.iter().sum::<f64>() / peaks.len() as f64;
        let var = peaks.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / peaks.len() as f64;
        doc.row(&[steps.to_string(), fmt_f64(var), fmt_f64(mean)]);
    }
    Ok(doc)
}

/// Collects the checkpoints of a run directory in step order.
pub fn run_checkpoints(dir: &Path) -> Result<Vec<(u64, Checkpoint)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(stem) = name.strip_prefix("checkpoint_").and_then(|s| s.strip_suffix(".ckpt")) {
            if let Ok(steps) = stem.parse::<u64>() {
                out.push((steps, crate::checkpoint::load_file(&path)?));
            }
        }
    }
    out.sort_by_key(|(s, _)| *s);
    if out.is_empty() {
        return Err(LabError::usage(format!(
            "no checkpoint_*.ckpt files under {}",
            dir.display()
        )));
    }
    Ok(out)
}
