use avgm_core::avgm::{AvgmLearner, TeamContext};
use avgm_core::encoder::LatentCategory;
use avgm_core::env::*;
use avgm_core::harness::replay::ReplayBuffer;
use avgm_core::harness::*;
use avgm_core::nn::NetConfig;
use avgm_core::rng::{streams, Rng};

// Probe state: both agents adjacent to cargo 0 at the map centre.
fn probe(env: &mut GridWorld) -> Vec<Observation> {
    env.reset(0);
    let occupied = |w: &GridWorld, cell: (i32, i32)| -> bool {
        (0..w.scenario().n_agents).any(|i| w.agent_position(i) == cell)
            || (0..w.scenario().n_targets).any(|i| w.target_alive(i) && w.target_position(i) == cell)
    };
    let mut park: Vec<(i32,i32)> = vec![];
    for r in (0..6).rev() { for c in (0..6).rev() {
        let cell = (r, c);
        if ![(3,3),(3,2),(3,4)].contains(&cell) { park.push(cell); }
    }}
    let mut k = 0;
    let mut next = |w: &GridWorld, k: &mut usize| -> (i32,i32) {
        loop { let c = park[*k]; *k += 1; if !occupied(w, c) { return c; } }
    };
    for i in 0..2 { let c = next(env, &mut k); env.place_agent(i, c.0, c.1); }
    for i in 0..2 { let c = next(env, &mut k); env.place_target(i, c.0, c.1); }
    env.place_target(0, 3, 3);
    env.place_agent(0, 3, 2);
    env.place_agent(1, 3, 4);
    env.observations()
}

fn main() {
    let penalty: f64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let steps: u64 = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(60_000);
    let mut sc = GridScenario::preset(ScenarioKind::Lift);
    sc.n_agents = 2; sc.n_targets = 2; sc.penalty = penalty;
    let mut env = GridWorld::new(sc.clone()).unwrap();
    let dims = EnvDims::of(&env);
    let net = NetConfig { rnn_hidden: 24, mixing_hidden: 16, encoder_hidden: 16, head_hidden: 16, z_categories: 12, ..NetConfig::default() };
    let upd: u32 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(4);
    let gamma: f64 = std::env::args().nth(4).and_then(|s| s.parse().ok()).unwrap_or(0.99);
    let sync: u64 = std::env::args().nth(5).and_then(|s| s.parse().ok()).unwrap_or(200);
    let hc = HarnessConfig { total_steps: steps, gamma, target_sync_episodes: sync, eps_anneal_steps: 150_000, batch_size: 16, replay_capacity: 1500, update_every_steps: upd as u64, eval_interval: 10_000, checkpoint_interval: 1_000_000, ..HarnessConfig::default() };
    let mut seed = RunSeed::new(1);
    let mut init = Rng::derive(1, streams::INIT);
    let mut learner = AvgmLearner::new(dims, net, &mut init).unwrap();

    let mut replay = ReplayBuffer::new(hc.replay_capacity);
    let mut env_steps = 0u64;
    let mut episodes = 0u64;
    let mut window_lifts = 0usize;
    let mut updates_done = 0u64;
    let mut window_fails = 0usize;
    let mut next_probe = 10_000u64;
    let mut last = (0.0, 0.0, 0.0);
    while env_steps < hc.total_steps {
        let eps = epsilon(env_steps, hc.eps_anneal_steps, hc.eps_final);
        let s = seed.env.next_u64();
        let (ep, st) = rollout(&learner, &mut env, s, eps, &mut seed.explore, None).unwrap();
        env_steps += ep.len as u64; episodes += 1;
        window_lifts += st.coop_events; window_fails += st.failed_interacts;
        replay.push(ep);
        let target = env_steps / hc.update_every_steps;
        if replay.len() >= hc.batch_size {
            while updates_done < target {
                let batch = replay.sample(hc.batch_size, 6, &mut seed.replay);
                let stats = learner.update(&batch, hc.gamma).unwrap();
                last = (stats.td_loss, stats.policy_loss.unwrap(), stats.encoder_loss.unwrap());
                updates_done += 1;
            }
        } else { updates_done = target; }
        if episodes % hc.target_sync_episodes == 0 { learner.sync_targets(); }
        if env_steps >= next_probe {
            next_probe += 10_000;
            // greedy eval
            let mut ev = Rng::derive(99, streams::EVAL);
            let row = evaluate(&learner, &mut env, 16, &mut ev).unwrap();
            // probe values
            let obs = probe(&mut env);
            let x = net_input(&obs[0], 6);
            let h = learner.advance_history(&learner.initial_history(), &x);
            let alone = learner.alone_values(&h);
            let lazy = learner.lazy_action(&h);
            let phi: Vec<f64> = (0..6).map(|a| learner.greedy_marginal(&h, obs[0].visible.len(), a).unwrap()).collect();
            let lift_ctx = {
                let team = TeamContext { visible: obs[0].visible.clone(), actions: vec![ACT_INTERACT; obs[0].visible.len()] };
                let z = learner.encode_context(&x, &team);
                learner.coll_values(&h, &LatentCategory { probs: z.one_hot(), hard_index: z.hard_index })
            };
            let (q_p, _) = learner.policy_step(&avgm_core::TensorBuf::zeros(&[1, 24]), &x);
            println!("step {env_steps}: train lifts {window_lifts} fails {window_fails} | eval ret/agent {:.3} lifts {:.2} | losses td {:.3} pol {:.3} enc {:.3}", row.mean_return_per_agent, row.mean_coop_events, last.0, last.1, last.2);
            println!("   probe: lazy={lazy} alone={:?}", alone.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("   phi*  ={:?}", phi.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("   Qcoll(lift-ctx)={:?}", lift_ctx.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            println!("   Qp    ={:?}", q_p.iter().map(|v| (v*100.0).round()/100.0).collect::<Vec<_>>());
            window_lifts = 0; window_fails = 0;
        }
    }
}
