use avgm_core::avgm::AvgmLearner;
use avgm_core::baselines::{BaselineKind, BaselineLearner};
use avgm_core::env::{EnvDims, GridScenario, GridWorld, ScenarioKind};
use avgm_core::harness::{train, HarnessConfig, Learner, MemoryObserver, RunSeed};
use avgm_core::nn::NetConfig;
use avgm_core::rng::{streams, Rng};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let method = args.get(1).map(|s| s.as_str()).unwrap_or("avgm");
    let penalty: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.3);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let steps: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(300_000);

    let mut sc = GridScenario::preset(ScenarioKind::Lift);
    sc.n_agents = 2;
    sc.n_targets = 2;
    sc.penalty = penalty;
    let mut env = GridWorld::new(sc).unwrap();
    let dims = EnvDims::of(&env);
    let net = NetConfig {
        rnn_hidden: 24,
        mixing_hidden: 16,
        encoder_hidden: 16,
        head_hidden: 16,
        z_categories: 12,
        ..NetConfig::default()
    };
    let harness = HarnessConfig {
        total_steps: steps,
        gamma: 0.95,
        eps_anneal_steps: 130_000,
        batch_size: 16,
        replay_capacity: 1500,
        update_every_steps: 12,
        target_sync_episodes: 40,
        eval_interval: 25_000,
        checkpoint_interval: 100_000,
        ..HarnessConfig::default()
    };
    let mut run_seed = RunSeed::new(seed);
    let mut init = Rng::derive(seed, streams::INIT);
    let mut learner: Box<dyn Learner> = match method {
        "avgm" => Box::new(AvgmLearner::new(dims, net, &mut init).unwrap()),
        other => Box::new(
            BaselineLearner::new(BaselineKind::parse(other).unwrap(), dims, net, &mut init).unwrap(),
        ),
    };
    let t0 = Instant::now();
    let mut obs = MemoryObserver::default();
    let summary = train(learner.as_mut(), &mut env, &harness, &mut run_seed, &mut obs).unwrap();
    println!("{method} P={penalty} seed {seed}:");
    for e in &obs.evals {
        println!(
            "  step {:>7}: return/agent {:>7.3}  lifts/ep {:>5.2}  fails/ep {:>6.2}  len {:>5.1}",
            e.env_steps, e.mean_return_per_agent, e.mean_coop_events, e.mean_failed_interacts, e.mean_len
        );
    }
    println!(
        "  episodes {}  elapsed {:.1}s",
        summary.episodes,
        t0.elapsed().as_secs_f64()
    );
}
