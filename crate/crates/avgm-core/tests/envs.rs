//! Environment behaviour: placement, movement, interaction events, reward
//! accounting, prey policy, visibility and determinism.

use avgm_core::env::{
    Environment, GridScenario, GridWorld, MatrixGame, PayoffTensor, ScenarioKind, ACT_DOWN,
    ACT_INTERACT, ACT_LEFT, ACT_RIGHT, ACT_STAY, ACT_UP,
};
use avgm_core::rng::Rng;
use avgm_core::CoreError;

/// Deterministically moves every entity to the requested cells, regardless
/// of the random reset layout, by parking everything on free cells first.
fn arrange(world: &mut GridWorld, agents: &[(i32, i32)], targets: &[(i32, i32)]) {
    let size = world.scenario().map_size as i32;
    let mut park = Vec::new();
    for r in (0..size).rev() {
        for c in (0..size).rev() {
            let cell = (r, c);
            if !agents.contains(&cell) && !targets.contains(&cell) {
                park.push(cell);
            }
        }
    }
    let occupied = |w: &GridWorld, cell: (i32, i32)| -> bool {
        (0..w.scenario().n_agents).any(|i| w.agent_position(i) == cell)
            || (0..w.scenario().n_targets).any(|i| w.target_alive(i) && w.target_position(i) == cell)
    };
    let mut park_iter = 0;
    let mut next_free = |w: &GridWorld| -> (i32, i32) {
        loop {
            let cell = park[park_iter];
            park_iter += 1;
            if !occupied(w, cell) {
                return cell;
            }
        }
    };
    for i in 0..world.scenario().n_agents {
        let cell = next_free(world);
        world.place_agent(i, cell.0, cell.1);
    }
    for i in 0..world.scenario().n_targets {
        let cell = next_free(world);
        world.place_target(i, cell.0, cell.1);
    }
    for (i, &(r, c)) in agents.iter().enumerate() {
        world.place_agent(i, r, c);
    }
    for (i, &(r, c)) in targets.iter().enumerate() {
        world.place_target(i, r, c);
    }
}

fn lift_world() -> GridWorld {
    let mut w = GridWorld::new(GridScenario::preset(ScenarioKind::Lift)).unwrap();
    w.reset(7);
    w
}

#[test]
fn presets_match_scenario_table() {
    let lift = GridScenario::preset(ScenarioKind::Lift);
    assert_eq!((lift.n_agents, lift.n_targets, lift.map_size), (3, 3, 6));
    assert_eq!((lift.coop_reward, lift.penalty, lift.k_coop), (1.0, 0.3, 2));
    let pursuit = GridScenario::preset(ScenarioKind::Pursuit);
    assert_eq!((pursuit.n_agents, pursuit.n_targets, pursuit.map_size), (4, 4, 7));
    assert_eq!((pursuit.coop_reward, pursuit.penalty), (1.5, 0.3));
    let triple = GridScenario::preset(ScenarioKind::TripleLift);
    assert_eq!((triple.coop_reward, triple.penalty, triple.k_coop), (2.0, 0.005, 3));
}

#[test]
fn reset_is_seed_deterministic_and_collision_free() {
    let mut a = GridWorld::new(GridScenario::preset(ScenarioKind::Lift)).unwrap();
    let mut b = GridWorld::new(GridScenario::preset(ScenarioKind::Lift)).unwrap();
    let (oa, sa) = a.reset(123);
    let (ob, sb) = b.reset(123);
    assert_eq!(oa, ob);
    assert_eq!(sa.data, sb.data);
    let (oc, _) = a.reset(124);
    assert_ne!(oa, oc);
    // no two entities share a cell
    let mut cells = Vec::new();
    for i in 0..3 {
        cells.push(a.agent_position(i));
        cells.push(a.target_position(i));
    }
    cells.sort();
    cells.dedup();
    assert_eq!(cells.len(), 6);
}

#[test]
fn map_too_small_is_config_error() {
    let mut sc = GridScenario::preset(ScenarioKind::Lift);
    sc.map_size = 2;
    sc.n_agents = 3;
    sc.n_targets = 3;
    match GridWorld::new(sc) {
        Err(CoreError::Config(_)) => {}
        other => panic!("expected config error, got {other:?}"),
    }
}

#[test]
fn paired_lift_fires_and_pays_r() {
    let mut w = lift_world();
    arrange(&mut w, &[(2, 1), (2, 3), (5, 5)], &[(2, 2), (0, 0), (0, 2)]);
    let out = w
        .step(&[ACT_INTERACT, ACT_INTERACT, ACT_UP])
        .unwrap();
    assert_eq!(out.reward, 1.0);
    assert_eq!(out.coop_events, 1);
    assert_eq!(out.failed_interacts, 0);
    assert!(!w.target_alive(0), "lifted cargo is removed");
}

#[test]
fn lone_interact_pays_penalty() {
    let mut w = lift_world();
    arrange(&mut w, &[(2, 1), (5, 5), (5, 3)], &[(2, 2), (0, 0), (0, 2)]);
    let out = w.step(&[ACT_INTERACT, ACT_STAY, ACT_STAY]).unwrap();
    assert_eq!(out.reward, -0.3);
    assert_eq!(out.failed_interacts, 1);
    assert_eq!(out.coop_events, 0);
    assert!(w.target_alive(0));
}

#[test]
fn all_stay_is_zero_reward() {
    let mut w = lift_world();
    let out = w.step(&[ACT_STAY, ACT_STAY, ACT_STAY]).unwrap();
    assert_eq!(out.reward, 0.0);
    assert_eq!(out.coop_events + out.failed_interacts, 0);
}

#[test]
fn triplelift_two_of_three_pays_two_penalties() {
    let mut w = GridWorld::new(GridScenario::preset(ScenarioKind::TripleLift)).unwrap();
    w.reset(5);
    arrange(&mut w, &[(2, 1), (2, 3), (1, 2)], &[(2, 2), (0, 0), (0, 4)]);
    let out = w.step(&[ACT_INTERACT, ACT_INTERACT, ACT_STAY]).unwrap();
    assert!((out.reward - (-2.0 * 0.005)).abs() < 1e-15);
    assert_eq!(out.failed_interacts, 2);
    assert_eq!(out.coop_events, 0);
    // all three lifting together fires the event
    let out = w.step(&[ACT_INTERACT, ACT_INTERACT, ACT_INTERACT]).unwrap();
    assert_eq!(out.reward, 2.0);
    assert_eq!(out.coop_events, 1);
}

#[test]
fn movement_conflicts_resolve_by_lowest_index() {
    let mut w = lift_world();
    arrange(&mut w, &[(0, 0), (0, 2), (5, 5)], &[(3, 3), (3, 5), (5, 0)]);
    // both want (0, 1): the lower index moves
    w.step(&[ACT_RIGHT, ACT_LEFT, ACT_STAY]).unwrap();
    assert_eq!(w.agent_position(0), (0, 1));
    assert_eq!(w.agent_position(1), (0, 2));
}

#[test]
fn swaps_and_trains_are_blocked() {
    let mut w = lift_world();
    arrange(&mut w, &[(1, 0), (1, 1), (1, 2)], &[(4, 4), (4, 0), (0, 4)]);
    // 0 and 1 try to swap; 2 tries to enter the cell 1 vacates
    w.step(&[ACT_RIGHT, ACT_LEFT, ACT_LEFT]).unwrap();
    assert_eq!(w.agent_position(0), (1, 0));
    assert_eq!(w.agent_position(1), (1, 1));
    assert_eq!(w.agent_position(2), (1, 2));
}

#[test]
fn out_of_bounds_moves_become_stay() {
    let mut w = lift_world();
    arrange(&mut w, &[(0, 0), (3, 3), (5, 5)], &[(2, 0), (2, 5), (0, 5)]);
    w.step(&[ACT_UP, ACT_STAY, ACT_DOWN]).unwrap();
    assert_eq!(w.agent_position(0), (0, 0));
    assert_eq!(w.agent_position(2), (5, 5));
}

#[test]
fn reward_accounting_matches_recount_on_random_play() {
    let mut rng = Rng::new(99);
    for kind in [
        ScenarioKind::Lift,
        ScenarioKind::TripleLift,
        ScenarioKind::Pursuit,
        ScenarioKind::Tiger,
    ] {
        let sc = GridScenario::preset(kind);
        let (r, p) = (sc.coop_reward, sc.penalty);
        let mut w = GridWorld::new(sc).unwrap();
        for ep in 0..5 {
            w.reset(1000 + ep);
            loop {
                let joint: Vec<usize> = (0..w.scenario().n_agents).map(|_| rng.below(6)).collect();
                let out = w.step(&joint).unwrap();
                let recount = r * out.coop_events as f64 - p * out.failed_interacts as f64;
                assert_eq!(out.reward, recount, "{kind:?}");
                if out.done {
                    break;
                }
            }
        }
    }
}

#[test]
fn visibility_is_symmetric_and_interactors_see_each_other() {
    let mut rng = Rng::new(55);
    let mut w = GridWorld::new(GridScenario::preset(ScenarioKind::Pursuit)).unwrap();
    for ep in 0..10 {
        let (mut obs, _) = w.reset(ep);
        for _ in 0..30 {
            for i in 0..4 {
                for v in &obs[i].visible {
                    assert!(
                        obs[v.id].visible.iter().any(|u| u.id == i),
                        "visibility must be symmetric"
                    );
                }
            }
            // any two agents adjacent to one target are mutually visible
            for i in 0..4 {
                for j in (i + 1)..4 {
                    let (ri, ci) = w.agent_position(i);
                    let (rj, cj) = w.agent_position(j);
                    for t in 0..4 {
                        if !w.target_alive(t) {
                            continue;
                        }
                        let (rt, ct) = w.target_position(t);
                        let adj_i = (rt - ri).abs() + (ct - ci).abs() == 1;
                        let adj_j = (rt - rj).abs() + (ct - cj).abs() == 1;
                        if adj_i && adj_j {
                            assert!(obs[i].visible.iter().any(|v| v.id == j));
                        }
                    }
                }
            }
            let joint: Vec<usize> = (0..4).map(|_| rng.below(6)).collect();
            let out = w.step(&joint).unwrap();
            obs = out.observations;
            if out.done {
                break;
            }
        }
    }
}

#[test]
fn prey_escapes_toward_far_cell() {
    let mut sc = GridScenario::preset(ScenarioKind::Pursuit);
    sc.n_agents = 1;
    sc.n_targets = 1;
    let mut escapes = 0;
    for trial in 0..10_000 {
        let mut w = GridWorld::new(sc.clone()).unwrap();
        w.reset(trial);
        arrange(&mut w, &[(0, 0)], &[(0, 1)]);
        w.step(&[ACT_STAY]).unwrap();
        // free neighbours were (1,1) (dist^2 2) and (0,2) (dist^2 4)
        if w.target_position(0) == (0, 2) {
            escapes += 1;
        }
    }
    let frac = escapes as f64 / 10_000.0;
    assert!(frac >= 0.8, "escape fraction {frac}");
}

#[test]
fn cargo_never_moves_and_boxed_prey_stays() {
    let mut w = lift_world();
    arrange(&mut w, &[(3, 1), (5, 5), (5, 3)], &[(3, 2), (0, 0), (0, 2)]);
    for _ in 0..10 {
        w.step(&[ACT_STAY, ACT_STAY, ACT_STAY]).unwrap();
        assert_eq!(w.target_position(0), (3, 2));
    }
    // boxed-in prey: corner with both neighbours occupied
    let mut sc = GridScenario::preset(ScenarioKind::Pursuit);
    sc.n_agents = 2;
    sc.n_targets = 1;
    let mut w = GridWorld::new(sc).unwrap();
    w.reset(3);
    arrange(&mut w, &[(0, 1), (1, 0)], &[(0, 0)]);
    for _ in 0..10 {
        w.step(&[ACT_STAY, ACT_STAY]).unwrap();
        assert_eq!(w.target_position(0), (0, 0));
    }
}

#[test]
fn tiger_pair_farms_forever_and_trio_kills() {
    let mut sc = GridScenario::preset(ScenarioKind::Tiger);
    sc.n_agents = 2;
    sc.n_targets = 1;
    let mut w = GridWorld::new(sc).unwrap();
    w.reset(1);
    arrange(&mut w, &[(0, 1), (1, 0)], &[(0, 0)]);
    let mut total = 0.0;
    for _ in 0..50 {
        let out = w.step(&[ACT_INTERACT, ACT_INTERACT]).unwrap();
        total += out.reward;
        assert!(!out.done);
        assert!(w.target_alive(0));
        assert_eq!(w.target_hp(0), 6, "regeneration matches the damage");
    }
    assert_eq!(total, 1.5 * 50.0);

    let mut sc = GridScenario::preset(ScenarioKind::Tiger);
    sc.n_agents = 3;
    sc.n_targets = 1;
    let mut w = GridWorld::new(sc).unwrap();
    w.reset(1);
    arrange(&mut w, &[(0, 0), (0, 2), (1, 1)], &[(0, 1)]);
    let mut steps = 0;
    loop {
        let out = w.step(&[ACT_INTERACT, ACT_INTERACT, ACT_INTERACT]).unwrap();
        steps += 1;
        assert_eq!(out.reward, 1.5, "every trio attack fires the event");
        if out.done {
            break;
        }
    }
    // hp 6 loses net 1 per step until the killing blow at hp 3
    assert_eq!(steps, 4);
    assert!(!w.target_alive(0));
}

#[test]
fn episode_is_bit_reproducible_from_seed_and_actions() {
    let mut rng = Rng::new(17);
    let actions: Vec<Vec<usize>> = (0..40).map(|_| (0..4).map(|_| rng.below(6)).collect()).collect();
    let run = |seed: u64| -> (Vec<u64>, Vec<f64>) {
        let mut w = GridWorld::new(GridScenario::preset(ScenarioKind::Tiger)).unwrap();
        w.reset(seed);
        let mut rewards = Vec::new();
        for joint in &actions {
            let out = w.step(joint).unwrap();
            rewards.push(out.reward);
            if out.done {
                break;
            }
        }
        (rewards.iter().map(|r| r.to_bits()).collect(), rewards)
    };
    assert_eq!(run(42).0, run(42).0);
    let mut w = GridWorld::new(GridScenario::preset(ScenarioKind::Tiger)).unwrap();
    let (a, _) = w.reset(42);
    let (b, _) = w.reset(43);
    assert_ne!(a, b, "different seeds give different layouts");
}

#[test]
fn episode_limit_is_one_hundred() {
    let mut w = GridWorld::new(GridScenario::preset(ScenarioKind::Pursuit)).unwrap();
    w.reset(9);
    let mut steps = 0;
    loop {
        let out = w.step(&[ACT_STAY; 4]).unwrap();
        steps += 1;
        if out.done {
            break;
        }
    }
    assert_eq!(steps, 100);
    assert!(matches!(
        w.step(&[ACT_STAY; 4]),
        Err(CoreError::Usage(_))
    ));
}

#[test]
fn matrix_game_is_single_step() {
    let mut game = MatrixGame::new(PayoffTensor::lifting(1.0, 0.3));
    game.reset(0);
    let out = game.step(&[0, 0]).unwrap();
    assert!(out.done);
    assert_eq!(out.reward, 1.0);
}

#[test]
fn observation_window_marks_out_of_bounds_and_entities() {
    let mut w = lift_world();
    arrange(&mut w, &[(0, 0), (0, 2), (5, 5)], &[(1, 1), (3, 3), (3, 5)]);
    let out = w.step(&[ACT_STAY, ACT_STAY, ACT_STAY]).unwrap();
    let obs = &out.observations[0];
    // 5x5 window centred at (0,0): the top two rows are out of bounds.
    let window = &obs.base[..75];
    let oob = &window[50..75];
    for cell in 0..10 {
        assert_eq!(oob[cell], 1.0, "rows above the map are out of bounds");
    }
    // agent 1 at relative (0, +2) -> window cell (2, 4)
    assert_eq!(window[2 * 5 + 4], 1.0);
    // cargo at relative (+1, +1) -> cell (3, 3) in the target channel
    assert_eq!(window[25 + 3 * 5 + 3], 1.0);
    // visible list contains agent 1 only
    assert_eq!(obs.visible_ids(), vec![1]);
}
